#include "amgnn/tuner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "amgnn/errors.hpp"

namespace amgnn {

std::vector<double> theta_grid181() {
    std::vector<double> grid;
    grid.reserve(181);
    for (int j = 10; j <= 190; ++j) grid.push_back(static_cast<double>(j) / 200.0);
    return grid;
}

std::vector<TunePoint> predict_curve(const NetworkParams& params, const PooledTensor& v_hat,
                                     double p, double log2_n1) {
    const std::vector<double> features = conv_features(params, v_hat);
    std::vector<TunePoint> curve;
    curve.reserve(181);
    for (double theta : theta_grid181()) {
        const Prediction pred = forward_from_features(params, features, p, log2_n1, theta);
        curve.push_back({theta, pred.t_hat, pred.sigma_hat});
    }
    return curve;
}

double sigma_hat_score(const std::vector<TunePoint>& curve) {
    if (curve.empty()) throw DimensionError("sigma_hat_score: empty curve");
    double s = 0.0;
    for (const TunePoint& pt : curve) s += (1.0 - pt.t_hat) * pt.sigma_hat;
    return s / static_cast<double>(curve.size());
}

TuneResult select_theta(const std::vector<TunePoint>& curve, double sigma_bar,
                        double default_theta) {
    if (curve.empty()) throw DimensionError("select_theta: empty curve");
    TuneResult r;
    r.curve = curve;
    r.sigma_hat = sigma_hat_score(curve);
    r.sigma_bar = sigma_bar;
    r.default_theta = default_theta;
    if (r.sigma_hat > sigma_bar) {
        r.used_default = true;
        r.theta_star = default_theta;
        return r;
    }
    std::size_t best = 0;
    for (std::size_t j = 1; j < curve.size(); ++j)
        if (curve[j].t_hat < curve[best].t_hat) best = j;
    r.theta_star = curve[best].theta;
    return r;
}

TuneResult tune_theta(const CsrMatrix& a, const NetworkParams& params, double sigma_bar,
                      double default_theta, double p) {
    const PooledTensor image = normalize(pool(a, params.spec.m));
    const double log2_n1 = std::log2(static_cast<double>(a.n_rows));
    return select_theta(predict_curve(params, image, p, log2_n1), sigma_bar, default_theta);
}

CalibrationResult calibrate_sigma_bar(const std::vector<double>& sigma_values) {
    if (sigma_values.empty())
        throw ConfigError("calibrate_sigma_bar: need at least one score");
    CalibrationResult r;
    r.sigma_sorted = sigma_values;
    std::sort(r.sigma_sorted.begin(), r.sigma_sorted.end(), std::greater<double>());

    const std::size_t n = r.sigma_sorted.size();
    if (n == 1) {
        r.elbow_index = 0;
        r.sigma_bar = r.sigma_sorted[0];
        return r;
    }

    // Perpendicular distance of (i, s_i) to the chord between the first and
    // last sorted points; the scan keeps the earliest maximum, so a flat
    // profile lands on the first interior index.
    const double x1 = static_cast<double>(n - 1);
    const double dy = r.sigma_sorted[n - 1] - r.sigma_sorted[0];
    std::size_t best = 1;
    double best_dist = -1.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double cross = x1 * (r.sigma_sorted[i] - r.sigma_sorted[0]) -
                             dy * static_cast<double>(i);
        const double dist = std::abs(cross);
        if (dist > best_dist) {
            best_dist = dist;
            best = i;
        }
    }
    r.elbow_index = best;
    r.sigma_bar = r.sigma_sorted[best];
    return r;
}

AnnSolveResult ann_amg_solve(const CsrMatrix& a, const std::vector<double>& f,
                             const std::vector<double>& u0, const AmgConfig& config,
                             const NetworkParams& params, double sigma_bar, double default_theta,
                             double p) {
    AnnSolveResult out;
    const auto start = std::chrono::steady_clock::now();
    out.tune = tune_theta(a, params, sigma_bar, default_theta, p);
    out.tune_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                           .count();
    AmgConfig cfg = config;
    cfg.theta = out.tune.theta_star;
    out.solve = amg_solve(a, f, u0, cfg);
    return out;
}

AnnSolveResult ann_amg_solve(const CsrMatrix& a, const std::vector<double>& f,
                             const AmgConfig& config, const NetworkParams& params,
                             double sigma_bar, double default_theta, double p) {
    return ann_amg_solve(a, f, std::vector<double>(a.n_rows, 0.0), config, params, sigma_bar,
                         default_theta, p);
}

std::string tune_result_to_json(const TuneResult& r) {
    nlohmann::json j;
    j["theta_star"] = r.theta_star;
    j["sigma_hat"] = r.sigma_hat;
    j["sigma_bar"] = r.sigma_bar;
    j["used_default"] = r.used_default;
    j["default_theta"] = r.default_theta;
    j["curve"] = nlohmann::json::array();
    for (const TunePoint& pt : r.curve)
        j["curve"].push_back(
            {{"theta", pt.theta}, {"t_hat", pt.t_hat}, {"sigma_hat", pt.sigma_hat}});
    return j.dump(2);
}

void write_curve_csv(const std::string& path, const std::vector<TunePoint>& curve) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "theta,t_hat,sigma_hat\n";
    char buf[96];
    for (const TunePoint& pt : curve) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", pt.theta, pt.t_hat, pt.sigma_hat);
        out << buf;
    }
    if (!out) throw IoError("write failure on '" + path + "'");
}

} // namespace amgnn
