#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "amgnn/dataset.hpp"
#include "amgnn/pooling.hpp"

namespace amgnn {

/** Channels-first dense tensor used for network activations. */
struct Tensor3 {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor3() = default;
    Tensor3(int c_, int h_, int w_)
        : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}

    double& at(int ci, int y, int x) {
        return v[(static_cast<std::size_t>(ci) * h + y) * w + x];
    }
    double at(int ci, int y, int x) const {
        return v[(static_cast<std::size_t>(ci) * h + y) * w + x];
    }
};

struct ConvBlockSpec {
    int filters = 8;
    int layers = 1; // conv layers per block, each stride 1, same padding, ReLU
    int kernel = 3;
};

/**
 * Regression network: convolutional blocks over the 4-channel pooled image
 * (each block ends in a 2x2 stride-2 max-pool), a dense layer down to
 * cnn_output_size, concatenation with the scalars (p when include_p,
 * log2 n1, theta), a ReLU dense stack, and a two-unit head producing
 * t in [0,1] (clamp) and sigma >= 0 (softplus).
 */
struct NetworkSpec {
    index_t m = 75;
    std::vector<ConvBlockSpec> conv_blocks = {{48, 3, 5}};
    int cnn_output_size = 256;
    std::vector<int> dense_widths = {256, 256};
    bool include_p = true;

    int scalar_inputs() const { return include_p ? 3 : 2; }
    /** Throws ConfigError for shapes the forward pass cannot realize. */
    void validate() const;
};

struct ParamArray {
    std::string name;
    std::vector<index_t> shape;
    std::vector<double> value;

    std::size_t size() const { return value.size(); }
};

struct NetworkParams {
    NetworkSpec spec;
    std::vector<ParamArray> arrays; // fixed order derived from spec

    ParamArray& at(const std::string& name);
    const ParamArray& at(const std::string& name) const;
    std::size_t parameter_count() const;
};

/** Parameter skeleton with all arrays zero, in canonical order. */
NetworkParams make_params(const NetworkSpec& spec);

/** Weights drawn from N(0, 2/fan_in), biases exactly zero. */
NetworkParams he_init(const NetworkSpec& spec, std::uint64_t seed);

/** he_init plus the cost-head bias lifted to 0.5 so the clamped output
 *  starts inside its live range. */
NetworkParams init_for_training(const NetworkSpec& spec, std::uint64_t seed);

struct Prediction {
    double t_hat = 0.0;
    double sigma_hat = 0.0;
};

/** Flattened output of the convolutional trunk; depends only on the image,
 *  so callers sweeping theta can compute it once. */
std::vector<double> conv_features(const NetworkParams& params, const PooledTensor& v_hat);

Prediction forward(const NetworkParams& params, const PooledTensor& v_hat, double p,
                   double log2_n1, double theta);

/** Forward pass of the dense part only, fed with cached trunk features. */
Prediction forward_from_features(const NetworkParams& params, const std::vector<double>& features,
                                 double p, double log2_n1, double theta);

/** Per-sample loss (t - t~)^2 + (sigma~^2 - (t - t~)^2)^2. */
double sample_loss(double t_true, double t_hat, double sigma_hat);

/** Batch mean of sample_loss. */
double loss(const std::vector<double>& t_true, const std::vector<double>& t_hat,
            const std::vector<double>& sigma_hat);

struct Gradients {
    std::vector<std::vector<double>> g; // aligned with NetworkParams::arrays
};

Gradients make_gradients(const NetworkParams& params);

struct Sample {
    const PooledTensor* v_hat = nullptr;
    double p = 0.0;
    double log2_n1 = 0.0;
    double theta = 0.0;
    double t_true = 0.0;
};

struct FeatureSample {
    const std::vector<double>* features = nullptr;
    double p = 0.0;
    double log2_n1 = 0.0;
    double theta = 0.0;
    double t_true = 0.0;
};

/** Forward + backward for one sample; accumulates parameter gradients
 *  scaled by `weight` into grads and returns the sample loss. */
double backprop_sample(const NetworkParams& params, const Sample& s, double weight,
                       Gradients& grads);
double backprop_sample_cached(const NetworkParams& params, const FeatureSample& s, double weight,
                              Gradients& grads);

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

AdamState make_adam(const NetworkParams& params);

/** One Adam update with bias correction; arrays whose name starts with
 *  "conv" are left untouched when freeze_conv is set. */
void adam_step(NetworkParams& params, AdamState& state, const Gradients& grads, double lr,
               bool freeze_conv);

struct TrainConfig {
    double lr = 1e-3;
    int batch = 32;
    int plateau_patience = 15;  // epochs without val improvement before halving
    double plateau_factor = 0.5;
    int max_epochs = 100;
    std::uint64_t seed = 0;
    bool freeze_conv = false;
    bool cache_conv_features = true; // with freeze_conv: train on cached trunk output

    void validate() const;
};

/** One optimizer step over a batch; returns the batch loss. Aborts with
 *  NumericalError when the loss stops being finite. */
double train_step(NetworkParams& params, AdamState& state, const std::vector<Sample>& batch,
                  const TrainConfig& cfg, double lr);
double train_step_cached(NetworkParams& params, AdamState& state,
                         const std::vector<FeatureSample>& batch, const TrainConfig& cfg,
                         double lr);

/** Expands curves into per-grid-point samples (tensor pointers refer into
 *  the curve list, which must outlive the samples). */
std::vector<Sample> expand_samples(const std::vector<ProblemCurve>& curves);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    NetworkParams params; // best-validation snapshot
    std::vector<EpochRecord> history;
    double best_val_loss = 0.0;
};

/**
 * Mini-batch Adam training with seeded shuffling and
 * halve-on-plateau learning-rate control; returns the parameters that
 * scored the best validation loss.
 */
TrainResult train(const std::vector<ProblemCurve>& train_curves,
                  const std::vector<ProblemCurve>& val_curves, const NetworkParams& init,
                  const TrainConfig& cfg);
TrainResult train(const std::vector<ProblemCurve>& train_curves,
                  const std::vector<ProblemCurve>& val_curves, const NetworkSpec& spec,
                  const TrainConfig& cfg);

/** Mean training loss / plain MSE of the cost prediction over samples. */
double mean_loss(const NetworkParams& params, const std::vector<Sample>& samples);
double mean_squared_error(const NetworkParams& params, const std::vector<Sample>& samples);

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

struct CheckpointData {
    NetworkParams params;
    std::map<std::string, std::string> metadata;
};

/** Binary container: magic "AMGNNCKP", format version, JSON header (spec,
 *  metadata, array manifest), then the raw little-endian float64 arrays.
 *  Round trips bit-exactly. */
void save_checkpoint(const std::string& path, const NetworkParams& params,
                     const std::map<std::string, std::string>& metadata = {});
CheckpointData load_checkpoint(const std::string& path);

} // namespace amgnn
