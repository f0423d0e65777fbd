#include "amgnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "amgnn/errors.hpp"

namespace amgnn {

PerfRecord perf_indices(int base_problem_id, const std::string& renumbering, double theta_star,
                        double theta_min, bool used_default, double t_ann, double t_base,
                        double t_min) {
    if (!(t_ann > 0.0) || !(t_base > 0.0) || !(t_min > 0.0))
        throw NumericalError("perf_indices: timings must be positive (problem " +
                             std::to_string(base_problem_id) + ")");
    PerfRecord r;
    r.base_problem_id = base_problem_id;
    r.renumbering = renumbering;
    r.theta_star = theta_star;
    r.theta_min = theta_min;
    r.used_default = used_default;
    r.t_ann = t_ann;
    r.t_base = t_base;
    r.t_min = t_min;
    r.perf = 1.0 - t_ann / t_base;
    r.perf_max = 1.0 - t_min / t_base;
    return r;
}

double median(std::vector<double> values) {
    if (values.empty()) throw DimensionError("median: empty input");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

EvalSummary aggregate(const std::vector<PerfRecord>& records, double baseline_theta) {
    if (records.empty()) throw DimensionError("aggregate: no performance records");
    EvalSummary s;
    s.count = records.size();
    s.baseline_theta = baseline_theta;

    std::vector<double> perf, ratios;
    perf.reserve(records.size());
    std::size_t positive = 0;
    double total = 0.0;
    for (const PerfRecord& r : records) {
        perf.push_back(r.perf);
        total += r.perf;
        if (r.perf >= 0.0) ++positive;
        const double ratio = r.perf / r.perf_max;
        if (std::isfinite(ratio))
            ratios.push_back(ratio);
        else
            ++s.ratio_excluded;
    }
    s.positive_fraction = static_cast<double>(positive) / static_cast<double>(records.size());
    s.perf_mean = total / static_cast<double>(records.size());
    s.perf_median = median(perf);
    s.perf_ratio_median =
        ratios.empty() ? std::numeric_limits<double>::quiet_NaN() : median(ratios);
    return s;
}

std::string summary_to_json(const EvalSummary& s) {
    nlohmann::json j;
    j["count"] = s.count;
    j["positive_fraction"] = s.positive_fraction;
    j["perf_mean"] = s.perf_mean;
    j["perf_median"] = s.perf_median;
    if (std::isfinite(s.perf_ratio_median))
        j["perf_ratio_median"] = s.perf_ratio_median;
    else
        j["perf_ratio_median"] = nullptr;
    j["ratio_excluded"] = s.ratio_excluded;
    j["baseline_theta"] = s.baseline_theta;
    return j.dump(2);
}

void write_records_csv(const std::string& path, const std::vector<PerfRecord>& records) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "base_problem_id,renumbering,theta_star,theta_min,used_default,"
           "t_ann,t_base,t_min,perf,perf_max\n";
    char buf[256];
    for (const PerfRecord& r : records) {
        std::snprintf(buf, sizeof buf, "%d,%s,%.17g,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      r.base_problem_id, r.renumbering.c_str(), r.theta_star, r.theta_min,
                      r.used_default ? 1 : 0, r.t_ann, r.t_base, r.t_min, r.perf, r.perf_max);
        out << buf;
    }
    if (!out) throw IoError("write failure on '" + path + "'");
}

} // namespace amgnn
