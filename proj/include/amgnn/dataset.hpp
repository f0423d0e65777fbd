#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amgnn/amg.hpp"
#include "amgnn/pooling.hpp"
#include "amgnn/problems.hpp"

namespace amgnn {

/** The 37 sweep points 0.05, 0.075, ..., 0.95. */
std::vector<double> theta_grid37();

enum class TimingMode { wallclock, cost_model };

TimingMode parse_timing_mode(const std::string& name);
std::string timing_mode_name(TimingMode m);

struct TimingPolicy {
    TimingMode mode = TimingMode::cost_model;
    int r_min = 2;
    int r_max = 100;
    double budget_seconds = 60.0; // target total time per sweep point

    void validate() const;
};

/** Repetition count for one sweep point: round(budget / mean of the first
 *  two measurements), clamped to [r_min, r_max]. */
int repetitions_for(double budget_seconds, double mean_of_first_two, int r_min = 2,
                    int r_max = 100);

struct RawCurve {
    std::vector<double> t;              // measured cost per grid point
    std::vector<std::uint8_t> capped;   // solver hit the iteration cap here
    std::vector<int> repetitions;       // measurements averaged per point
};

struct PointMeasurement {
    double t = 0.0;
    bool capped = false;
    int repetitions = 0;
};

/** Cost of one solve at the theta already set in cfg, under the given
 *  timing policy (work units in cost_model mode, mean seconds otherwise). */
PointMeasurement measure_point(const ProblemInstance& instance, const AmgConfig& cfg,
                               const TimingPolicy& policy);

/**
 * Sweeps the 37-point theta grid on one problem. In wallclock mode each
 * point is timed twice, the repetition count derived from that mean, and
 * the mean over all repetitions recorded. cost_model mode records the
 * deterministic work-unit surrogate of a single run.
 */
RawCurve measure_curve(const ProblemInstance& instance, const AmgConfig& cfg_template,
                       const TimingPolicy& policy);

struct SmoothResult {
    std::vector<double> values;
    bool review_flag = false;
};

/**
 * Savitzky-Golay smoothing: least-squares polynomial fit of the given
 * degree over a sliding window, truncated windows refit near the ends.
 * Flags the curve for review when any smoothed value is <= 0 or the
 * smoothed minimum moved by more than review_threshold times the raw range.
 */
SmoothResult savgol_smooth(const std::vector<double>& curve, int window = 21, int degree = 7,
                           double review_threshold = 0.05);

struct NormalizeResult {
    std::vector<double> values;
    bool flat = false; // max == min; values forced to zero
};

/** Rescales to [0,1] via (t - min)/(max - min). */
NormalizeResult normalize_curve(const std::vector<double>& smoothed);

/** One fully processed training record: pooled image plus the cost curve
 *  at every stage of the pipeline. */
struct ProblemCurve {
    int base_problem_id = 0;
    std::string renumbering = "natural";
    std::string machine_tag;
    std::string timing_mode = "cost_model";
    int p = 1;
    double log2_n1 = 0.0;
    PooledTensor v_hat; // normalized pooled image
    std::vector<double> theta_grid;
    std::vector<double> t_raw_mean;
    std::vector<double> t_smoothed;
    std::vector<double> t_normalized;
    std::vector<std::uint8_t> capped;
    std::vector<int> repetitions;
    bool review_flag = false;
};

struct CurveOptions {
    index_t m = 75;              // pooled image side
    int sg_window = 21;
    int sg_degree = 7;
    double review_threshold = 0.05;
    std::string machine_tag;
};

/** Full per-problem pipeline: pool + normalize the matrix image, sweep the
 *  grid, smooth, normalize the curve. */
ProblemCurve build_curve(const ProblemInstance& instance, const AmgConfig& cfg_template,
                         const TimingPolicy& policy, const CurveOptions& opts);

struct SplitSpec {
    double train_fraction = 0.2;
    double val_fraction = 0.2; // remainder goes to test
    std::uint64_t seed = 0;
};

struct DatasetSplit {
    std::vector<ProblemCurve> train;
    std::vector<ProblemCurve> val;
    std::vector<ProblemCurve> test;
};

/** Seeded partition over base_problem_id: renumbered variants of one base
 *  problem always land in the same split; fractional counts are floored and
 *  the remainder goes to test. */
DatasetSplit split_dataset(const std::vector<ProblemCurve>& curves, const SplitSpec& spec);

/** JSON-lines dataset file, one record per curve. Image tensors are stored
 *  as base64 little-endian float32 with an explicit shape; scalars stay
 *  float64. Reading validates schema_version and all shapes. */
void write_dataset(const std::string& path, const std::vector<ProblemCurve>& curves);
std::vector<ProblemCurve> read_dataset(const std::string& path);

} // namespace amgnn
