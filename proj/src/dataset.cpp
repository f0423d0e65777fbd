#include "amgnn/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "amgnn/errors.hpp"
#include "amgnn/rng.hpp"

namespace amgnn {

namespace {
constexpr int kSchemaVersion = 1;
constexpr int kGridPoints = 37;
} // namespace

std::vector<double> theta_grid37() {
    std::vector<double> grid(kGridPoints);
    for (int i = 0; i < kGridPoints; ++i) grid[i] = 0.05 + 0.025 * i;
    return grid;
}

TimingMode parse_timing_mode(const std::string& name) {
    if (name == "wallclock") return TimingMode::wallclock;
    if (name == "cost_model") return TimingMode::cost_model;
    throw ConfigError("unknown timing mode '" + name + "'");
}

std::string timing_mode_name(TimingMode m) {
    return m == TimingMode::wallclock ? "wallclock" : "cost_model";
}

void TimingPolicy::validate() const {
    if (r_min < 1 || r_max < r_min)
        throw ConfigError("TimingPolicy: need 1 <= r_min <= r_max");
    if (!(budget_seconds > 0.0)) throw ConfigError("TimingPolicy: budget_seconds must be > 0");
}

int repetitions_for(double budget_seconds, double mean_of_first_two, int r_min, int r_max) {
    if (!(mean_of_first_two > 0.0)) return r_max; // instantaneous runs: repeat the maximum
    const double r = std::round(budget_seconds / mean_of_first_two);
    return static_cast<int>(std::clamp(r, static_cast<double>(r_min), static_cast<double>(r_max)));
}

PointMeasurement measure_point(const ProblemInstance& instance, const AmgConfig& cfg,
                               const TimingPolicy& policy) {
    policy.validate();
    PointMeasurement out;
    if (policy.mode == TimingMode::cost_model) {
        const SolveResult res = amg_solve(instance.A, instance.f, cfg);
        out.t = res.stats.work_units;
        out.capped = !res.stats.converged;
        out.repetitions = 1;
        return out;
    }
    double sum = 0.0;
    bool capped = false;
    for (int rep = 0; rep < 2; ++rep) {
        const SolveResult res = amg_solve(instance.A, instance.f, cfg);
        sum += res.stats.wall_seconds;
        capped = capped || !res.stats.converged;
    }
    const int r = repetitions_for(policy.budget_seconds, sum / 2.0, policy.r_min, policy.r_max);
    for (int rep = 2; rep < r; ++rep) {
        const SolveResult res = amg_solve(instance.A, instance.f, cfg);
        sum += res.stats.wall_seconds;
        capped = capped || !res.stats.converged;
    }
    out.t = sum / r;
    out.capped = capped;
    out.repetitions = r;
    return out;
}

RawCurve measure_curve(const ProblemInstance& instance, const AmgConfig& cfg_template,
                       const TimingPolicy& policy) {
    policy.validate();
    const std::vector<double> grid = theta_grid37();
    RawCurve out;
    out.t.resize(grid.size());
    out.capped.resize(grid.size());
    out.repetitions.resize(grid.size());

    for (std::size_t i = 0; i < grid.size(); ++i) {
        AmgConfig cfg = cfg_template;
        cfg.theta = grid[i];
        const PointMeasurement pt = measure_point(instance, cfg, policy);
        out.t[i] = pt.t;
        out.capped[i] = pt.capped ? 1 : 0;
        out.repetitions[i] = pt.repetitions;
    }
    return out;
}

SmoothResult savgol_smooth(const std::vector<double>& curve, int window, int degree,
                           double review_threshold) {
    const int n = static_cast<int>(curve.size());
    if (window < 1 || window % 2 == 0)
        throw ConfigError("savgol_smooth: window must be odd and positive");
    if (degree < 0 || degree >= window)
        throw ConfigError("savgol_smooth: degree must lie in [0, window)");
    if (window > n)
        throw ConfigError("savgol_smooth: window " + std::to_string(window) +
                          " exceeds curve length " + std::to_string(n));

    const int half = window / 2;
    SmoothResult out;
    out.values.resize(n);

    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - half);
        const int hi = std::min(n - 1, i + half);
        const int pts = hi - lo + 1;

        bool all_equal = true;
        for (int j = lo + 1; j <= hi && all_equal; ++j) all_equal = (curve[j] == curve[lo]);
        if (all_equal) {
            out.values[i] = curve[lo];
            continue;
        }

        // Least-squares fit in the offset variable scaled to about [-1,1];
        // the fitted value at offset 0 is coefficient 0.
        DenseMatrix vand(pts, degree + 1);
        std::vector<double> rhs(pts);
        for (int j = 0; j < pts; ++j) {
            const double x = static_cast<double>(lo + j - i) / half;
            double pw = 1.0;
            for (int d = 0; d <= degree; ++d) {
                vand(j, d) = pw;
                pw *= x;
            }
            rhs[j] = curve[lo + j];
        }
        out.values[i] = lstsq(vand, rhs)[0];
    }

    const auto [raw_min_it, raw_max_it] = std::minmax_element(curve.begin(), curve.end());
    const double raw_range = *raw_max_it - *raw_min_it;
    const double smooth_min = *std::min_element(out.values.begin(), out.values.end());
    const bool nonpositive =
        std::any_of(out.values.begin(), out.values.end(), [](double v) { return v <= 0.0; });
    const bool min_moved = std::fabs(smooth_min - *raw_min_it) > review_threshold * raw_range;
    out.review_flag = nonpositive || min_moved;
    return out;
}

NormalizeResult normalize_curve(const std::vector<double>& smoothed) {
    NormalizeResult out;
    out.values.assign(smoothed.size(), 0.0);
    if (smoothed.empty()) {
        out.flat = true;
        return out;
    }
    const auto [min_it, max_it] = std::minmax_element(smoothed.begin(), smoothed.end());
    const double range = *max_it - *min_it;
    if (range == 0.0) {
        out.flat = true;
        return out;
    }
    for (std::size_t i = 0; i < smoothed.size(); ++i)
        out.values[i] = (smoothed[i] - *min_it) / range;
    return out;
}

ProblemCurve build_curve(const ProblemInstance& instance, const AmgConfig& cfg_template,
                         const TimingPolicy& policy, const CurveOptions& opts) {
    ProblemCurve c;
    c.base_problem_id = instance.base_problem_id;
    c.renumbering = instance.renumbering;
    c.machine_tag = opts.machine_tag;
    c.timing_mode = timing_mode_name(policy.mode);
    c.p = instance.grid.p;
    c.log2_n1 = instance.log2_n1();
    c.v_hat = normalize(pool(instance.A, opts.m));
    c.theta_grid = theta_grid37();

    RawCurve raw = measure_curve(instance, cfg_template, policy);
    c.t_raw_mean = std::move(raw.t);
    c.capped = std::move(raw.capped);
    c.repetitions = std::move(raw.repetitions);

    SmoothResult sm = savgol_smooth(c.t_raw_mean, opts.sg_window, opts.sg_degree,
                                    opts.review_threshold);
    c.t_smoothed = std::move(sm.values);
    c.review_flag = sm.review_flag;

    NormalizeResult norm = normalize_curve(c.t_smoothed);
    c.t_normalized = std::move(norm.values);
    if (norm.flat) c.review_flag = true;
    return c;
}

DatasetSplit split_dataset(const std::vector<ProblemCurve>& curves, const SplitSpec& spec) {
    if (!(spec.train_fraction >= 0.0 && spec.val_fraction >= 0.0 &&
          spec.train_fraction + spec.val_fraction <= 1.0))
        throw ConfigError("split_dataset: fractions must be nonnegative and sum to <= 1");

    std::vector<int> ids;
    for (const ProblemCurve& c : curves) ids.push_back(c.base_problem_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

    Rng rng(spec.seed);
    for (std::size_t i = ids.size(); i > 1; --i)
        std::swap(ids[i - 1], ids[rng.uniform_index(i)]);

    const auto n = ids.size();
    const auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * n));
    const auto n_val = static_cast<std::size_t>(std::floor(spec.val_fraction * n));

    enum class Dest { train, val, test };
    std::vector<std::pair<int, Dest>> dest;
    for (std::size_t i = 0; i < n; ++i) {
        Dest d = Dest::test;
        if (i < n_train)
            d = Dest::train;
        else if (i < n_train + n_val)
            d = Dest::val;
        dest.emplace_back(ids[i], d);
    }
    auto lookup = [&](int id) {
        for (const auto& [pid, d] : dest)
            if (pid == id) return d;
        return Dest::test;
    };

    DatasetSplit split;
    for (const ProblemCurve& c : curves) {
        switch (lookup(c.base_problem_id)) {
        case Dest::train: split.train.push_back(c); break;
        case Dest::val: split.val.push_back(c); break;
        case Dest::test: split.test.push_back(c); break;
        }
    }
    return split;
}

namespace {

const char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 3 <= bytes.size()) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back(kB64Alphabet[(v >> 6) & 63]);
        out.push_back(kB64Alphabet[v & 63]);
        i += 3;
    }
    const std::size_t rem = bytes.size() - i;
    if (rem == 1) {
        const std::uint32_t v = bytes[i] << 16;
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back('=');
        out.push_back('=');
    } else if (rem == 2) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back(kB64Alphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    std::array<int, 256> rev;
    rev.fill(-1);
    for (int i = 0; i < 64; ++i) rev[static_cast<unsigned char>(kB64Alphabet[i])] = i;

    std::vector<std::uint8_t> out;
    std::uint32_t buf = 0;
    int bits = 0;
    for (char ch : text) {
        if (ch == '=') break;
        const int v = rev[static_cast<unsigned char>(ch)];
        if (v < 0) throw IoError("base64: invalid character in tensor payload");
        buf = (buf << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((buf >> bits) & 0xFF));
        }
    }
    return out;
}

std::string tensor_to_b64(const PooledTensor& t) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(t.data.size() * 4);
    for (double v : t.data) {
        const auto bitsv = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        bytes.push_back(static_cast<std::uint8_t>(bitsv & 0xFF));
        bytes.push_back(static_cast<std::uint8_t>((bitsv >> 8) & 0xFF));
        bytes.push_back(static_cast<std::uint8_t>((bitsv >> 16) & 0xFF));
        bytes.push_back(static_cast<std::uint8_t>((bitsv >> 24) & 0xFF));
    }
    return base64_encode(bytes);
}

PooledTensor tensor_from_b64(const std::string& b64, index_t m) {
    const std::vector<std::uint8_t> bytes = base64_decode(b64);
    const std::size_t expected = static_cast<std::size_t>(4) * m * m * 4;
    if (bytes.size() != expected)
        throw IoError("dataset: tensor payload holds " + std::to_string(bytes.size()) +
                      " bytes, expected " + std::to_string(expected) + " for shape [4," +
                      std::to_string(m) + "," + std::to_string(m) + "]");
    PooledTensor t(m);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        const std::uint32_t bitsv = static_cast<std::uint32_t>(bytes[4 * i]) |
                                    (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                                    (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                                    (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
        t.data[i] = static_cast<double>(std::bit_cast<float>(bitsv));
    }
    return t;
}

nlohmann::json curve_to_json(const ProblemCurve& c) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["base_problem_id"] = c.base_problem_id;
    j["renumbering"] = c.renumbering;
    j["machine_tag"] = c.machine_tag;
    j["timing_mode"] = c.timing_mode;
    j["p"] = c.p;
    j["log2_n1"] = c.log2_n1;
    j["v_hat"] = {{"shape", {4, c.v_hat.m, c.v_hat.m}},
                  {"dtype", "float32"},
                  {"data_b64", tensor_to_b64(c.v_hat)}};
    j["theta_grid"] = c.theta_grid;
    j["t_raw_mean"] = c.t_raw_mean;
    j["t_smoothed"] = c.t_smoothed;
    j["t_normalized"] = c.t_normalized;
    j["capped"] = c.capped;
    j["repetitions"] = c.repetitions;
    j["review_flag"] = c.review_flag;
    return j;
}

ProblemCurve curve_from_json(const nlohmann::json& j) {
    const int version = j.at("schema_version").get<int>();
    if (version != kSchemaVersion)
        throw IoError("dataset: unsupported schema_version " + std::to_string(version) +
                      " (expected " + std::to_string(kSchemaVersion) + ")");

    ProblemCurve c;
    c.base_problem_id = j.at("base_problem_id").get<int>();
    c.renumbering = j.at("renumbering").get<std::string>();
    c.machine_tag = j.at("machine_tag").get<std::string>();
    c.timing_mode = j.at("timing_mode").get<std::string>();
    c.p = j.at("p").get<int>();
    c.log2_n1 = j.at("log2_n1").get<double>();

    const auto& vh = j.at("v_hat");
    const auto shape = vh.at("shape").get<std::vector<index_t>>();
    if (shape.size() != 3 || shape[0] != 4 || shape[1] != shape[2] || shape[1] < 1)
        throw IoError("dataset: bad v_hat shape");
    if (vh.at("dtype").get<std::string>() != "float32")
        throw IoError("dataset: unsupported v_hat dtype");
    c.v_hat = tensor_from_b64(vh.at("data_b64").get<std::string>(), shape[1]);

    c.theta_grid = j.at("theta_grid").get<std::vector<double>>();
    c.t_raw_mean = j.at("t_raw_mean").get<std::vector<double>>();
    c.t_smoothed = j.at("t_smoothed").get<std::vector<double>>();
    c.t_normalized = j.at("t_normalized").get<std::vector<double>>();
    c.capped = j.at("capped").get<std::vector<std::uint8_t>>();
    c.repetitions = j.at("repetitions").get<std::vector<int>>();
    c.review_flag = j.at("review_flag").get<bool>();

    const std::size_t n = c.theta_grid.size();
    if (c.t_raw_mean.size() != n || c.t_smoothed.size() != n || c.t_normalized.size() != n ||
        c.capped.size() != n || c.repetitions.size() != n)
        throw IoError("dataset: curve arrays are not aligned with theta_grid");
    return c;
}

} // namespace

void write_dataset(const std::string& path, const std::vector<ProblemCurve>& curves) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (const ProblemCurve& c : curves) out << curve_to_json(c).dump() << "\n";
    if (!out) throw IoError("write failure on '" + path + "'");
}

std::vector<ProblemCurve> read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<ProblemCurve> curves;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        try {
            curves.push_back(curve_from_json(j));
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return curves;
}

} // namespace amgnn
