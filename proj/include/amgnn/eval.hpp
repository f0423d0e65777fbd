#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace amgnn {

/**
 * Per-problem comparison of the auto-tuned solve against a fixed-theta
 * baseline. perf = 1 - t_ann / t_base (positive when the tuned solve is
 * cheaper); perf_max is the same index for the best theta on the sweep grid,
 * the headroom an ideal selector could reach.
 */
struct PerfRecord {
    int base_problem_id = 0;
    std::string renumbering = "natural";
    double theta_star = 0.0;
    double theta_min = 0.0; // grid argmin of the measured cost
    bool used_default = false;
    double t_ann = 0.0;
    double t_base = 0.0;
    double t_min = 0.0;
    double perf = 0.0;
    double perf_max = 0.0;
};

/** Fills perf and perf_max from the timings; all three must be positive. */
PerfRecord perf_indices(int base_problem_id, const std::string& renumbering, double theta_star,
                        double theta_min, bool used_default, double t_ann, double t_base,
                        double t_min);

struct EvalSummary {
    std::size_t count = 0;
    double positive_fraction = 0.0; // share of records with perf >= 0
    double perf_mean = 0.0;
    double perf_median = 0.0;
    double perf_ratio_median = 0.0; // median of perf / perf_max over finite ratios
    std::size_t ratio_excluded = 0; // records dropped from the ratio median
    double baseline_theta = 0.5;
};

/** Sorted median; the even case averages the middle two. */
double median(std::vector<double> values);

EvalSummary aggregate(const std::vector<PerfRecord>& records, double baseline_theta = 0.5);

std::string summary_to_json(const EvalSummary& s);
void write_records_csv(const std::string& path, const std::vector<PerfRecord>& records);

} // namespace amgnn
