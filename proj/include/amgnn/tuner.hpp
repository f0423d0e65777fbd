#pragma once

#include <string>
#include <vector>

#include "amgnn/amg.hpp"
#include "amgnn/nn.hpp"
#include "amgnn/pooling.hpp"
#include "amgnn/sparse.hpp"

namespace amgnn {

struct TunePoint {
    double theta = 0.0;
    double t_hat = 0.0;
    double sigma_hat = 0.0;
};

struct TuneResult {
    double theta_star = 0.0;
    double sigma_hat = 0.0;  // confidence score of the predicted curve
    double sigma_bar = 0.0;  // threshold the score was compared against
    bool used_default = false;
    double default_theta = 0.5;
    std::vector<TunePoint> curve;
};

/** The fixed prediction grid: theta = j/200 for j = 10..190. */
std::vector<double> theta_grid181();

/** Sweeps the prediction grid with the trunk features computed once. */
std::vector<TunePoint> predict_curve(const NetworkParams& params, const PooledTensor& v_hat,
                                     double p, double log2_n1);

/** Mean of (1 - t_hat) * sigma_hat over the predicted curve. */
double sigma_hat_score(const std::vector<TunePoint>& curve);

/**
 * Chooses theta from a predicted curve: when the confidence score exceeds
 * sigma_bar the default is returned, otherwise the grid argmin of the
 * predicted cost (ties resolve to the smaller theta).
 */
TuneResult select_theta(const std::vector<TunePoint>& curve, double sigma_bar,
                        double default_theta = 0.5);

/** Pools and normalizes the matrix image, then predicts and selects. */
TuneResult tune_theta(const CsrMatrix& a, const NetworkParams& params, double sigma_bar,
                      double default_theta = 0.5, double p = 1.0);

struct CalibrationResult {
    double sigma_bar = 0.0;
    std::vector<double> sigma_sorted; // descending
    std::size_t elbow_index = 0;
};

/**
 * Picks the confidence threshold from a set of scores: sorts them in
 * descending order and takes the value at the elbow, the point with the
 * largest perpendicular distance to the chord between the first and last
 * points. A flat profile falls back to the first interior index.
 */
CalibrationResult calibrate_sigma_bar(const std::vector<double>& sigma_values);

struct AnnSolveResult {
    SolveResult solve;
    TuneResult tune;
    double tune_seconds = 0.0; // pooling + prediction + selection
};

/**
 * End-to-end auto-tuned solve: pool the matrix, predict the cost curve,
 * pick theta, then run the multigrid solve with that strong threshold.
 * config.theta is ignored; p is the element order scalar fed to the network.
 */
AnnSolveResult ann_amg_solve(const CsrMatrix& a, const std::vector<double>& f,
                             const std::vector<double>& u0, const AmgConfig& config,
                             const NetworkParams& params, double sigma_bar,
                             double default_theta = 0.5, double p = 1.0);
AnnSolveResult ann_amg_solve(const CsrMatrix& a, const std::vector<double>& f,
                             const AmgConfig& config, const NetworkParams& params,
                             double sigma_bar, double default_theta = 0.5, double p = 1.0);

std::string tune_result_to_json(const TuneResult& r);
void write_curve_csv(const std::string& path, const std::vector<TunePoint>& curve);

} // namespace amgnn
