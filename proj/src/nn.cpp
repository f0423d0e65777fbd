#include "amgnn/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "amgnn/errors.hpp"
#include "amgnn/rng.hpp"

namespace amgnn {

void NetworkSpec::validate() const {
    if (m < 1) throw ConfigError("NetworkSpec: m must be >= 1");
    if (conv_blocks.empty() || conv_blocks.size() > 3)
        throw ConfigError("NetworkSpec: expected 1 to 3 conv blocks, got " +
                          std::to_string(conv_blocks.size()));
    index_t side = m;
    for (const ConvBlockSpec& b : conv_blocks) {
        if (b.filters < 1 || b.layers < 1 || b.kernel < 1)
            throw ConfigError("NetworkSpec: conv block fields must be positive");
        side /= 2; // 2x2 stride-2 max-pool after the block
        if (side < 1)
            throw ConfigError("NetworkSpec: image side shrinks to zero after pooling; "
                              "m too small for " + std::to_string(conv_blocks.size()) +
                              " blocks");
    }
    if (cnn_output_size < 1) throw ConfigError("NetworkSpec: cnn_output_size must be >= 1");
    for (int w : dense_widths)
        if (w < 1) throw ConfigError("NetworkSpec: dense widths must be >= 1");
}

ParamArray& NetworkParams::at(const std::string& name) {
    for (ParamArray& a : arrays)
        if (a.name == name) return a;
    throw StructureError("missing parameter '" + name + "'");
}

const ParamArray& NetworkParams::at(const std::string& name) const {
    for (const ParamArray& a : arrays)
        if (a.name == name) return a;
    throw StructureError("missing parameter '" + name + "'");
}

std::size_t NetworkParams::parameter_count() const {
    std::size_t n = 0;
    for (const ParamArray& a : arrays) n += a.size();
    return n;
}

namespace {

// Index bookkeeping for the canonical array order: conv layers (w,b pairs),
// the flatten dense layer, the dense stack, the two-unit head.
struct Layout {
    std::vector<int> block_of_layer; // conv layer -> block
    std::vector<int> kernel_of_layer;
    int n_conv_layers = 0;
    int cnn_w = 0, cnn_b = 0;
    int first_dense = 0;
    int n_dense = 0;
    int head_w = 0, head_b = 0;
    index_t flat_size = 0;      // trunk output length
    index_t final_side = 0;     // image side after the last pool
    int concat_size = 0;
};

Layout layout_of(const NetworkSpec& spec) {
    Layout lo;
    for (std::size_t b = 0; b < spec.conv_blocks.size(); ++b) {
        for (int l = 0; l < spec.conv_blocks[b].layers; ++l) {
            lo.block_of_layer.push_back(static_cast<int>(b));
            lo.kernel_of_layer.push_back(spec.conv_blocks[b].kernel);
        }
    }
    lo.n_conv_layers = static_cast<int>(lo.block_of_layer.size());
    lo.cnn_w = 2 * lo.n_conv_layers;
    lo.cnn_b = lo.cnn_w + 1;
    lo.first_dense = lo.cnn_b + 1;
    lo.n_dense = static_cast<int>(spec.dense_widths.size());
    lo.head_w = lo.first_dense + 2 * lo.n_dense;
    lo.head_b = lo.head_w + 1;

    index_t side = spec.m;
    for (std::size_t b = 0; b < spec.conv_blocks.size(); ++b) side /= 2;
    lo.final_side = side;
    lo.flat_size = static_cast<index_t>(spec.conv_blocks.back().filters) * side * side;
    lo.concat_size = spec.cnn_output_size + spec.scalar_inputs();
    return lo;
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

double softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::size_t idx3(const Tensor3& t, int c, int y, int x) {
    return (static_cast<std::size_t>(c) * t.h + y) * t.w + x;
}

void conv_forward(const Tensor3& in, const ParamArray& w, const ParamArray& b, Tensor3& pre) {
    const int oc = static_cast<int>(w.shape[0]);
    const int ic = static_cast<int>(w.shape[1]);
    const int k = static_cast<int>(w.shape[2]);
    const int pb = (k - 1) / 2;
    pre = Tensor3(oc, in.h, in.w);
    const std::size_t plane = static_cast<std::size_t>(in.h) * in.w;
    for (int o = 0; o < oc; ++o)
        std::fill_n(pre.v.begin() + o * plane, plane, b.value[o]);

    for (int o = 0; o < oc; ++o) {
        for (int i = 0; i < ic; ++i) {
            const double* wbase = w.value.data() + (static_cast<std::size_t>(o) * ic + i) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                const int dy = ky - pb;
                const int y0 = std::max(0, -dy);
                const int y1 = std::min(in.h, in.h - dy);
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = wbase[ky * k + kx];
                    if (wv == 0.0) continue;
                    const int dx = kx - pb;
                    const int x0 = std::max(0, -dx);
                    const int x1 = std::min(in.w, in.w - dx);
                    for (int y = y0; y < y1; ++y) {
                        const double* src = in.v.data() + idx3(in, i, y + dy, x0 + dx);
                        double* dst = pre.v.data() + idx3(pre, o, y, x0);
                        for (int x = x0; x < x1; ++x) dst[x - x0] += wv * src[x - x0];
                    }
                }
            }
        }
    }
}

void conv_backward(const Tensor3& in, const ParamArray& w, const Tensor3& dpre, Tensor3& din,
                   std::vector<double>& dw, std::vector<double>& db, double weight) {
    const int oc = static_cast<int>(w.shape[0]);
    const int ic = static_cast<int>(w.shape[1]);
    const int k = static_cast<int>(w.shape[2]);
    const int pb = (k - 1) / 2;
    din = Tensor3(in.c, in.h, in.w);

    const std::size_t plane = static_cast<std::size_t>(dpre.h) * dpre.w;
    for (int o = 0; o < oc; ++o) {
        double s = 0.0;
        const double* g = dpre.v.data() + o * plane;
        for (std::size_t t = 0; t < plane; ++t) s += g[t];
        db[o] += weight * s;
    }

    for (int o = 0; o < oc; ++o) {
        for (int i = 0; i < ic; ++i) {
            const std::size_t wbase = (static_cast<std::size_t>(o) * ic + i) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                const int dy = ky - pb;
                const int y0 = std::max(0, -dy);
                const int y1 = std::min(in.h, in.h - dy);
                for (int kx = 0; kx < k; ++kx) {
                    const int dx = kx - pb;
                    const int x0 = std::max(0, -dx);
                    const int x1 = std::min(in.w, in.w - dx);
                    const double wv = w.value[wbase + ky * k + kx];
                    double wg = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const double* src = in.v.data() + idx3(in, i, y + dy, x0 + dx);
                        double* dsrc = din.v.data() + idx3(din, i, y + dy, x0 + dx);
                        const double* g = dpre.v.data() + idx3(dpre, o, y, x0);
                        for (int x = 0; x < x1 - x0; ++x) {
                            wg += src[x] * g[x];
                            dsrc[x] += wv * g[x];
                        }
                    }
                    dw[wbase + ky * k + kx] += weight * wg;
                }
            }
        }
    }
}

void maxpool_forward(const Tensor3& in, Tensor3& out, std::vector<std::size_t>& argmax) {
    const int oh = in.h / 2;
    const int ow = in.w / 2;
    out = Tensor3(in.c, oh, ow);
    argmax.assign(out.v.size(), 0);
    for (int c = 0; c < in.c; ++c) {
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_idx = 0;
                for (int py = 0; py < 2; ++py) {
                    for (int px = 0; px < 2; ++px) {
                        const std::size_t src = idx3(in, c, 2 * y + py, 2 * x + px);
                        if (in.v[src] > best) {
                            best = in.v[src];
                            best_idx = src;
                        }
                    }
                }
                const std::size_t dst = idx3(out, c, y, x);
                out.v[dst] = best;
                argmax[dst] = best_idx;
            }
        }
    }
}

void dense_forward(const ParamArray& w, const ParamArray& b, const std::vector<double>& x,
                   std::vector<double>& y) {
    const auto out = static_cast<std::size_t>(w.shape[0]);
    const auto in = static_cast<std::size_t>(w.shape[1]);
    y.resize(out);
    for (std::size_t o = 0; o < out; ++o) {
        const double* row = w.value.data() + o * in;
        double s = b.value[o];
        for (std::size_t i = 0; i < in; ++i) s += row[i] * x[i];
        y[o] = s;
    }
}

void dense_backward(const ParamArray& w, const std::vector<double>& x,
                    const std::vector<double>& dy, std::vector<double>& dx,
                    std::vector<double>& dw, std::vector<double>& db, double weight) {
    const auto out = static_cast<std::size_t>(w.shape[0]);
    const auto in = static_cast<std::size_t>(w.shape[1]);
    dx.assign(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
        const double g = dy[o];
        db[o] += weight * g;
        const double* row = w.value.data() + o * in;
        double* drow = dw.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) {
            drow[i] += weight * g * x[i];
            dx[i] += row[i] * g;
        }
    }
}

struct ConvCache {
    std::vector<Tensor3> inputs; // input of conv layer i
    std::vector<Tensor3> pres;   // pre-activation of conv layer i
    std::vector<Tensor3> pooled; // output of block b
    std::vector<std::vector<std::size_t>> argmax;
};

struct DenseCache {
    std::vector<double> features;
    std::vector<double> cnn_pre;
    std::vector<double> concat;
    std::vector<std::vector<double>> pres;
    std::vector<std::vector<double>> posts;
    std::vector<double> head; // z_t, z_sigma
};

Tensor3 image_to_tensor(const NetworkSpec& spec, const PooledTensor& v_hat) {
    if (v_hat.m != spec.m)
        throw DimensionError("forward: image side " + std::to_string(v_hat.m) +
                             " does not match network input " + std::to_string(spec.m));
    Tensor3 t(4, static_cast<int>(spec.m), static_cast<int>(spec.m));
    t.v = v_hat.data;
    return t;
}

void trunk_forward(const NetworkParams& params, const Layout& lo, Tensor3 x, ConvCache& cache) {
    const NetworkSpec& spec = params.spec;
    cache.inputs.clear();
    cache.pres.clear();
    cache.pooled.clear();
    cache.argmax.clear();

    int layer = 0;
    for (std::size_t b = 0; b < spec.conv_blocks.size(); ++b) {
        for (int l = 0; l < spec.conv_blocks[b].layers; ++l, ++layer) {
            cache.inputs.push_back(x);
            Tensor3 pre;
            conv_forward(x, params.arrays[2 * layer], params.arrays[2 * layer + 1], pre);
            cache.pres.push_back(pre);
            x = pre;
            for (double& v : x.v) v = relu(v);
        }
        Tensor3 pooled;
        std::vector<std::size_t> amax;
        maxpool_forward(x, pooled, amax);
        cache.pooled.push_back(pooled);
        cache.argmax.push_back(std::move(amax));
        x = cache.pooled.back();
    }
    (void)lo;
}

std::vector<double> flatten(const Tensor3& t) { return t.v; }

void head_forward(const NetworkParams& params, const Layout& lo,
                  const std::vector<double>& features, double p, double log2_n1, double theta,
                  DenseCache& cache) {
    const NetworkSpec& spec = params.spec;
    cache.features = features;
    dense_forward(params.arrays[lo.cnn_w], params.arrays[lo.cnn_b], features, cache.cnn_pre);

    cache.concat.clear();
    cache.concat.reserve(lo.concat_size);
    for (double v : cache.cnn_pre) cache.concat.push_back(relu(v));
    if (spec.include_p) cache.concat.push_back(p);
    cache.concat.push_back(log2_n1);
    cache.concat.push_back(theta);

    cache.pres.resize(lo.n_dense);
    cache.posts.resize(lo.n_dense);
    const std::vector<double>* in = &cache.concat;
    for (int d = 0; d < lo.n_dense; ++d) {
        dense_forward(params.arrays[lo.first_dense + 2 * d],
                      params.arrays[lo.first_dense + 2 * d + 1], *in, cache.pres[d]);
        cache.posts[d] = cache.pres[d];
        for (double& v : cache.posts[d]) v = relu(v);
        in = &cache.posts[d];
    }
    dense_forward(params.arrays[lo.head_w], params.arrays[lo.head_b], *in, cache.head);
}

Prediction head_outputs(const DenseCache& cache) {
    Prediction out;
    out.t_hat = std::clamp(cache.head[0], 0.0, 1.0);
    out.sigma_hat = softplus(cache.head[1]);
    return out;
}

// Backward through the dense part. dfeatures may be null when the trunk
// gradient is not needed (frozen conv with cached features).
void head_backward(const NetworkParams& params, const Layout& lo, const DenseCache& cache,
                   double d_t_hat, double d_sigma_hat, double weight, Gradients& grads,
                   std::vector<double>* dfeatures) {
    const NetworkSpec& spec = params.spec;
    std::vector<double> dhead(2);
    const double z_t = cache.head[0];
    dhead[0] = (z_t >= 0.0 && z_t <= 1.0) ? d_t_hat : 0.0;
    dhead[1] = d_sigma_hat * sigmoid(cache.head[1]);

    const std::vector<double>& head_in = lo.n_dense > 0 ? cache.posts.back() : cache.concat;
    std::vector<double> dx;
    dense_backward(params.arrays[lo.head_w], head_in, dhead, dx, grads.g[lo.head_w],
                   grads.g[lo.head_b], weight);

    for (int d = lo.n_dense - 1; d >= 0; --d) {
        std::vector<double> dpre = dx;
        for (std::size_t i = 0; i < dpre.size(); ++i)
            if (cache.pres[d][i] <= 0.0) dpre[i] = 0.0;
        const std::vector<double>& in = d > 0 ? cache.posts[d - 1] : cache.concat;
        dense_backward(params.arrays[lo.first_dense + 2 * d], in, dpre, dx,
                       grads.g[lo.first_dense + 2 * d], grads.g[lo.first_dense + 2 * d + 1],
                       weight);
    }

    // Split the concat gradient; scalar inputs are leaves.
    std::vector<double> d_cnn(spec.cnn_output_size);
    for (int i = 0; i < spec.cnn_output_size; ++i)
        d_cnn[i] = (cache.cnn_pre[i] > 0.0) ? dx[i] : 0.0;

    std::vector<double> dfeat;
    dense_backward(params.arrays[lo.cnn_w], cache.features, d_cnn, dfeat, grads.g[lo.cnn_w],
                   grads.g[lo.cnn_b], weight);
    if (dfeatures) *dfeatures = std::move(dfeat);
}

void trunk_backward(const NetworkParams& params, const Layout& lo, const ConvCache& cache,
                    const std::vector<double>& dfeatures, double weight, Gradients& grads) {
    const NetworkSpec& spec = params.spec;
    const Tensor3& last = cache.pooled.back();
    Tensor3 dx(last.c, last.h, last.w);
    dx.v = dfeatures;

    int layer = lo.n_conv_layers;
    for (int b = static_cast<int>(spec.conv_blocks.size()) - 1; b >= 0; --b) {
        // Undo the pool: route gradient to the argmax positions.
        const Tensor3& pre_last = cache.pres[layer - 1];
        Tensor3 dpost(pre_last.c, pre_last.h, pre_last.w);
        for (std::size_t t = 0; t < dx.v.size(); ++t) dpost.v[cache.argmax[b][t]] += dx.v[t];

        for (int l = spec.conv_blocks[b].layers - 1; l >= 0; --l) {
            --layer;
            Tensor3 dpre = dpost;
            for (std::size_t t = 0; t < dpre.v.size(); ++t)
                if (cache.pres[layer].v[t] <= 0.0) dpre.v[t] = 0.0;
            Tensor3 din;
            conv_backward(cache.inputs[layer], params.arrays[2 * layer], dpre, din,
                          grads.g[2 * layer], grads.g[2 * layer + 1], weight);
            dpost = std::move(din);
        }
        dx = std::move(dpost);
    }
}

// dL/dt_hat and dL/dsigma_hat of the per-sample loss.
void loss_gradient(double t_true, const Prediction& pred, double& d_t, double& d_sigma) {
    const double e = t_true - pred.t_hat;
    const double s = pred.sigma_hat * pred.sigma_hat;
    d_t = -2.0 * e + 4.0 * e * (s - e * e);
    d_sigma = 4.0 * pred.sigma_hat * (s - e * e);
}

} // namespace

NetworkParams make_params(const NetworkSpec& spec) {
    spec.validate();
    NetworkParams p;
    p.spec = spec;
    const Layout lo = layout_of(spec);

    int in_ch = 4;
    int layer = 0;
    for (std::size_t b = 0; b < spec.conv_blocks.size(); ++b) {
        const ConvBlockSpec& cb = spec.conv_blocks[b];
        for (int l = 0; l < cb.layers; ++l, ++layer) {
            const std::string tag = "conv" + std::to_string(b) + "_" + std::to_string(l);
            p.arrays.push_back(
                {tag + "_w",
                 {cb.filters, in_ch, cb.kernel, cb.kernel},
                 std::vector<double>(static_cast<std::size_t>(cb.filters) * in_ch * cb.kernel *
                                         cb.kernel,
                                     0.0)});
            p.arrays.push_back({tag + "_b", {cb.filters},
                                std::vector<double>(static_cast<std::size_t>(cb.filters), 0.0)});
            in_ch = cb.filters;
        }
    }

    p.arrays.push_back({"cnn_dense_w",
                        {spec.cnn_output_size, lo.flat_size},
                        std::vector<double>(static_cast<std::size_t>(spec.cnn_output_size) *
                                                lo.flat_size,
                                            0.0)});
    p.arrays.push_back({"cnn_dense_b", {spec.cnn_output_size},
                        std::vector<double>(static_cast<std::size_t>(spec.cnn_output_size), 0.0)});

    int prev = lo.concat_size;
    for (std::size_t d = 0; d < spec.dense_widths.size(); ++d) {
        const int wdt = spec.dense_widths[d];
        const std::string tag = "dense" + std::to_string(d);
        p.arrays.push_back({tag + "_w", {wdt, prev},
                            std::vector<double>(static_cast<std::size_t>(wdt) * prev, 0.0)});
        p.arrays.push_back({tag + "_b", {wdt},
                            std::vector<double>(static_cast<std::size_t>(wdt), 0.0)});
        prev = wdt;
    }
    p.arrays.push_back({"head_w", {2, prev},
                        std::vector<double>(static_cast<std::size_t>(2) * prev, 0.0)});
    p.arrays.push_back({"head_b", {2}, std::vector<double>(2, 0.0)});
    return p;
}

NetworkParams he_init(const NetworkSpec& spec, std::uint64_t seed) {
    NetworkParams p = make_params(spec);
    Rng rng(seed);
    for (ParamArray& a : p.arrays) {
        if (a.name.ends_with("_b")) continue; // biases stay zero
        std::size_t fan_in = 1;
        for (std::size_t d = 1; d < a.shape.size(); ++d)
            fan_in *= static_cast<std::size_t>(a.shape[d]);
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (double& v : a.value) v = rng.normal(0.0, stddev);
    }
    return p;
}

NetworkParams init_for_training(const NetworkSpec& spec, std::uint64_t seed) {
    NetworkParams p = he_init(spec, seed);
    p.at("head_b").value[0] = 0.5;
    return p;
}

std::vector<double> conv_features(const NetworkParams& params, const PooledTensor& v_hat) {
    params.spec.validate();
    const Layout lo = layout_of(params.spec);
    ConvCache cache;
    trunk_forward(params, lo, image_to_tensor(params.spec, v_hat), cache);
    return flatten(cache.pooled.back());
}

Prediction forward(const NetworkParams& params, const PooledTensor& v_hat, double p,
                   double log2_n1, double theta) {
    const Layout lo = layout_of(params.spec);
    ConvCache conv_cache;
    trunk_forward(params, lo, image_to_tensor(params.spec, v_hat), conv_cache);
    DenseCache dense_cache;
    head_forward(params, lo, flatten(conv_cache.pooled.back()), p, log2_n1, theta, dense_cache);
    return head_outputs(dense_cache);
}

Prediction forward_from_features(const NetworkParams& params, const std::vector<double>& features,
                                 double p, double log2_n1, double theta) {
    const Layout lo = layout_of(params.spec);
    if (features.size() != static_cast<std::size_t>(lo.flat_size))
        throw DimensionError("forward_from_features: got " + std::to_string(features.size()) +
                             " features, expected " + std::to_string(lo.flat_size));
    DenseCache dense_cache;
    head_forward(params, lo, features, p, log2_n1, theta, dense_cache);
    return head_outputs(dense_cache);
}

double sample_loss(double t_true, double t_hat, double sigma_hat) {
    const double e = t_true - t_hat;
    const double q = sigma_hat * sigma_hat - e * e;
    return e * e + q * q;
}

double loss(const std::vector<double>& t_true, const std::vector<double>& t_hat,
            const std::vector<double>& sigma_hat) {
    if (t_true.size() != t_hat.size() || t_true.size() != sigma_hat.size())
        throw DimensionError("loss: batch arrays must be the same length");
    if (t_true.empty()) throw DimensionError("loss: empty batch");
    double s = 0.0;
    for (std::size_t i = 0; i < t_true.size(); ++i)
        s += sample_loss(t_true[i], t_hat[i], sigma_hat[i]);
    return s / static_cast<double>(t_true.size());
}

Gradients make_gradients(const NetworkParams& params) {
    Gradients g;
    g.g.resize(params.arrays.size());
    for (std::size_t i = 0; i < params.arrays.size(); ++i)
        g.g[i].assign(params.arrays[i].size(), 0.0);
    return g;
}

double backprop_sample(const NetworkParams& params, const Sample& s, double weight,
                       Gradients& grads) {
    const Layout lo = layout_of(params.spec);
    ConvCache conv_cache;
    trunk_forward(params, lo, image_to_tensor(params.spec, *s.v_hat), conv_cache);
    DenseCache dense_cache;
    head_forward(params, lo, flatten(conv_cache.pooled.back()), s.p, s.log2_n1, s.theta,
                 dense_cache);
    const Prediction pred = head_outputs(dense_cache);

    double d_t = 0.0, d_sigma = 0.0;
    loss_gradient(s.t_true, pred, d_t, d_sigma);
    std::vector<double> dfeatures;
    head_backward(params, lo, dense_cache, d_t, d_sigma, weight, grads, &dfeatures);
    trunk_backward(params, lo, conv_cache, dfeatures, weight, grads);
    return sample_loss(s.t_true, pred.t_hat, pred.sigma_hat);
}

double backprop_sample_cached(const NetworkParams& params, const FeatureSample& s, double weight,
                              Gradients& grads) {
    const Layout lo = layout_of(params.spec);
    DenseCache dense_cache;
    head_forward(params, lo, *s.features, s.p, s.log2_n1, s.theta, dense_cache);
    const Prediction pred = head_outputs(dense_cache);

    double d_t = 0.0, d_sigma = 0.0;
    loss_gradient(s.t_true, pred, d_t, d_sigma);
    head_backward(params, lo, dense_cache, d_t, d_sigma, weight, grads, nullptr);
    return sample_loss(s.t_true, pred.t_hat, pred.sigma_hat);
}

AdamState make_adam(const NetworkParams& params) {
    AdamState st;
    st.m.resize(params.arrays.size());
    st.v.resize(params.arrays.size());
    for (std::size_t i = 0; i < params.arrays.size(); ++i) {
        st.m[i].assign(params.arrays[i].size(), 0.0);
        st.v[i].assign(params.arrays[i].size(), 0.0);
    }
    return st;
}

void adam_step(NetworkParams& params, AdamState& state, const Gradients& grads, double lr,
               bool freeze_conv) {
    if (state.m.size() != params.arrays.size() || grads.g.size() != params.arrays.size())
        throw DimensionError("adam_step: state/gradient layout does not match parameters");
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.arrays.size(); ++i) {
        if (freeze_conv && params.arrays[i].name.starts_with("conv")) continue;
        auto& val = params.arrays[i].value;
        auto& m = state.m[i];
        auto& v = state.v[i];
        const auto& g = grads.g[i];
        for (std::size_t t = 0; t < val.size(); ++t) {
            m[t] = state.beta1 * m[t] + (1.0 - state.beta1) * g[t];
            v[t] = state.beta2 * v[t] + (1.0 - state.beta2) * g[t] * g[t];
            const double mhat = m[t] / bc1;
            const double vhat = v[t] / bc2;
            val[t] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("TrainConfig: lr must be > 0");
    if (batch < 1) throw ConfigError("TrainConfig: batch must be >= 1");
    if (plateau_patience < 1) throw ConfigError("TrainConfig: plateau_patience must be >= 1");
    if (!(plateau_factor > 0.0 && plateau_factor <= 1.0))
        throw ConfigError("TrainConfig: plateau_factor must lie in (0, 1]");
    if (max_epochs < 1) throw ConfigError("TrainConfig: max_epochs must be >= 1");
}

namespace {

double checked_batch_loss(double total, std::size_t count) {
    const double mean = total / static_cast<double>(count);
    if (!std::isfinite(mean))
        throw NumericalError("training aborted: non-finite batch loss (diverged parameters or "
                             "bad input data)");
    return mean;
}

} // namespace

double train_step(NetworkParams& params, AdamState& state, const std::vector<Sample>& batch,
                  const TrainConfig& cfg, double lr) {
    if (batch.empty()) throw DimensionError("train_step: empty batch");
    Gradients grads = make_gradients(params);
    const double w = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const Sample& s : batch) total += backprop_sample(params, s, w, grads);
    const double mean = checked_batch_loss(total, batch.size());
    adam_step(params, state, grads, lr, cfg.freeze_conv);
    return mean;
}

double train_step_cached(NetworkParams& params, AdamState& state,
                         const std::vector<FeatureSample>& batch, const TrainConfig& cfg,
                         double lr) {
    (void)cfg; // the cached path always runs with the trunk frozen
    if (batch.empty()) throw DimensionError("train_step_cached: empty batch");
    Gradients grads = make_gradients(params);
    const double w = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const FeatureSample& s : batch) total += backprop_sample_cached(params, s, w, grads);
    const double mean = checked_batch_loss(total, batch.size());
    adam_step(params, state, grads, lr, true);
    return mean;
}

std::vector<Sample> expand_samples(const std::vector<ProblemCurve>& curves) {
    std::vector<Sample> out;
    for (const ProblemCurve& c : curves) {
        for (std::size_t j = 0; j < c.theta_grid.size(); ++j) {
            out.push_back({&c.v_hat, static_cast<double>(c.p), c.log2_n1, c.theta_grid[j],
                           c.t_normalized[j]});
        }
    }
    return out;
}

double mean_loss(const NetworkParams& params, const std::vector<Sample>& samples) {
    if (samples.empty()) throw DimensionError("mean_loss: no samples");
    double s = 0.0;
    for (const Sample& smp : samples) {
        const Prediction p = forward(params, *smp.v_hat, smp.p, smp.log2_n1, smp.theta);
        s += sample_loss(smp.t_true, p.t_hat, p.sigma_hat);
    }
    return s / static_cast<double>(samples.size());
}

double mean_squared_error(const NetworkParams& params, const std::vector<Sample>& samples) {
    if (samples.empty()) throw DimensionError("mean_squared_error: no samples");
    double s = 0.0;
    for (const Sample& smp : samples) {
        const Prediction p = forward(params, *smp.v_hat, smp.p, smp.log2_n1, smp.theta);
        s += (p.t_hat - smp.t_true) * (p.t_hat - smp.t_true);
    }
    return s / static_cast<double>(samples.size());
}

TrainResult train(const std::vector<ProblemCurve>& train_curves,
                  const std::vector<ProblemCurve>& val_curves, const NetworkParams& init,
                  const TrainConfig& cfg) {
    cfg.validate();
    init.spec.validate();
    if (train_curves.empty() || val_curves.empty())
        throw ConfigError("train: training and validation curve lists must be nonempty");

    NetworkParams params = init;
    AdamState adam = make_adam(params);
    const bool cached = cfg.freeze_conv && cfg.cache_conv_features;

    const std::vector<Sample> train_samples = expand_samples(train_curves);
    const std::vector<Sample> val_samples = expand_samples(val_curves);

    // With a frozen trunk the per-curve features never change; compute them
    // once and train the dense part on top.
    std::vector<std::vector<double>> train_feat, val_feat;
    std::vector<FeatureSample> train_fs, val_fs;
    if (cached) {
        train_feat.reserve(train_curves.size());
        for (const ProblemCurve& c : train_curves)
            train_feat.push_back(conv_features(params, c.v_hat));
        val_feat.reserve(val_curves.size());
        for (const ProblemCurve& c : val_curves)
            val_feat.push_back(conv_features(params, c.v_hat));
        for (std::size_t ci = 0; ci < train_curves.size(); ++ci) {
            const ProblemCurve& c = train_curves[ci];
            for (std::size_t j = 0; j < c.theta_grid.size(); ++j)
                train_fs.push_back({&train_feat[ci], static_cast<double>(c.p), c.log2_n1,
                                    c.theta_grid[j], c.t_normalized[j]});
        }
        for (std::size_t ci = 0; ci < val_curves.size(); ++ci) {
            const ProblemCurve& c = val_curves[ci];
            for (std::size_t j = 0; j < c.theta_grid.size(); ++j)
                val_fs.push_back({&val_feat[ci], static_cast<double>(c.p), c.log2_n1,
                                  c.theta_grid[j], c.t_normalized[j]});
        }
    }

    auto val_loss_now = [&]() {
        if (!cached) return mean_loss(params, val_samples);
        double s = 0.0;
        for (const FeatureSample& fs : val_fs) {
            const Prediction p = forward_from_features(params, *fs.features, fs.p, fs.log2_n1,
                                                       fs.theta);
            s += sample_loss(fs.t_true, p.t_hat, p.sigma_hat);
        }
        return s / static_cast<double>(val_fs.size());
    };

    TrainResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(train_samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    double lr = cfg.lr;
    int bad_epochs = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_index(i)]);

        double train_total = 0.0;
        std::size_t done = 0;
        while (done < order.size()) {
            const std::size_t take = std::min<std::size_t>(cfg.batch, order.size() - done);
            double batch_loss;
            if (cached) {
                std::vector<FeatureSample> batch;
                batch.reserve(take);
                for (std::size_t i = 0; i < take; ++i) batch.push_back(train_fs[order[done + i]]);
                batch_loss = train_step_cached(params, adam, batch, cfg, lr);
            } else {
                std::vector<Sample> batch;
                batch.reserve(take);
                for (std::size_t i = 0; i < take; ++i)
                    batch.push_back(train_samples[order[done + i]]);
                batch_loss = train_step(params, adam, batch, cfg, lr);
            }
            train_total += batch_loss * static_cast<double>(take);
            done += take;
        }

        const double train_loss = train_total / static_cast<double>(order.size());
        const double val_loss = val_loss_now();
        result.history.push_back({epoch, train_loss, val_loss, lr});

        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.params = params;
            bad_epochs = 0;
        } else {
            ++bad_epochs;
            if (bad_epochs == cfg.plateau_patience) {
                lr *= cfg.plateau_factor;
                bad_epochs = 0;
            }
        }
    }

    if (!std::isfinite(result.best_val_loss)) result.params = params;
    return result;
}

TrainResult train(const std::vector<ProblemCurve>& train_curves,
                  const std::vector<ProblemCurve>& val_curves, const NetworkSpec& spec,
                  const TrainConfig& cfg) {
    return train(train_curves, val_curves, init_for_training(spec, cfg.seed), cfg);
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "epoch,train_loss,val_loss,lr\n";
    char buf[96];
    for (const EpochRecord& r : history) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss,
                      r.val_loss, r.lr);
        out << buf;
    }
    if (!out) throw IoError("write failure on '" + path + "'");
}

namespace {

constexpr char kMagic[8] = {'A', 'M', 'G', 'N', 'N', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

nlohmann::json spec_to_json(const NetworkSpec& spec) {
    nlohmann::json j;
    j["m"] = spec.m;
    j["conv_blocks"] = nlohmann::json::array();
    for (const ConvBlockSpec& b : spec.conv_blocks)
        j["conv_blocks"].push_back(
            {{"filters", b.filters}, {"layers", b.layers}, {"kernel", b.kernel}});
    j["cnn_output_size"] = spec.cnn_output_size;
    j["dense_widths"] = spec.dense_widths;
    j["include_p"] = spec.include_p;
    return j;
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
    NetworkSpec spec;
    spec.m = j.at("m").get<index_t>();
    spec.conv_blocks.clear();
    for (const auto& b : j.at("conv_blocks"))
        spec.conv_blocks.push_back({b.at("filters").get<int>(), b.at("layers").get<int>(),
                                    b.at("kernel").get<int>()});
    spec.cnn_output_size = j.at("cnn_output_size").get<int>();
    spec.dense_widths = j.at("dense_widths").get<std::vector<int>>();
    spec.include_p = j.at("include_p").get<bool>();
    return spec;
}

} // namespace

void save_checkpoint(const std::string& path, const NetworkParams& params,
                     const std::map<std::string, std::string>& metadata) {
    nlohmann::json header;
    header["schema_version"] = kCheckpointVersion;
    header["spec"] = spec_to_json(params.spec);
    header["metadata"] = metadata;
    header["arrays"] = nlohmann::json::array();
    for (const ParamArray& a : params.arrays)
        header["arrays"].push_back({{"name", a.name}, {"shape", a.shape}});
    const std::string header_str = header.dump();

    std::string buf;
    buf.append(kMagic, sizeof kMagic);
    put_u32(buf, kCheckpointVersion);
    put_u64(buf, header_str.size());
    buf += header_str;
    for (const ParamArray& a : params.arrays)
        for (double v : a.value) put_u64(buf, std::bit_cast<std::uint64_t>(v));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failure on '" + path + "'");
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (content.size() < sizeof kMagic + 12 ||
        std::memcmp(content.data(), kMagic, sizeof kMagic) != 0)
        throw IoError(path + ": not a checkpoint file (bad magic)");

    std::size_t pos = sizeof kMagic;
    auto get_u32 = [&]() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(content[pos++])) << (8 * i);
        return v;
    };
    auto get_u64 = [&]() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(content[pos++])) << (8 * i);
        return v;
    };

    const std::uint32_t version = get_u32();
    if (version != kCheckpointVersion)
        throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t header_len = get_u64();
    if (pos + header_len > content.size())
        throw IoError(path + ": truncated checkpoint header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(content.substr(pos, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": bad checkpoint header: " + e.what());
    }
    pos += header_len;

    CheckpointData data;
    data.params = make_params(spec_from_json(header.at("spec")));
    if (header.contains("metadata"))
        data.metadata = header.at("metadata").get<std::map<std::string, std::string>>();

    // The manifest must list exactly the arrays the spec implies, with the
    // expected shapes, in file order.
    const auto& manifest = header.at("arrays");
    std::vector<char> seen(data.params.arrays.size(), 0);
    for (const auto& entry : manifest) {
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<index_t>>();
        ParamArray* target = nullptr;
        for (std::size_t i = 0; i < data.params.arrays.size(); ++i) {
            if (data.params.arrays[i].name == name) {
                if (seen[i]) throw IoError(path + ": duplicate parameter '" + name + "'");
                seen[i] = 1;
                target = &data.params.arrays[i];
                break;
            }
        }
        if (!target) throw IoError(path + ": unexpected parameter '" + name + "'");
        if (shape != target->shape)
            throw IoError(path + ": parameter '" + name + "' has mismatched shape for the "
                          "declared network spec");
        const std::size_t bytes = target->size() * 8;
        if (pos + bytes > content.size())
            throw IoError(path + ": truncated payload for parameter '" + name + "'");
        for (double& v : target->value) v = std::bit_cast<double>(get_u64());
    }
    for (std::size_t i = 0; i < data.params.arrays.size(); ++i)
        if (!seen[i])
            throw IoError(path + ": missing parameter '" + data.params.arrays[i].name + "'");
    return data;
}

} // namespace amgnn
