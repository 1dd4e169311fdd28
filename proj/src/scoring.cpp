#include "mstgat/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace mstgat {

Vec per_sensor_scores(const Vec& p, const Vec& x, const Vec& x_hat, double gamma2)
{
    if (p.size() != x.size() || x.size() != x_hat.size()) throw DataError("per_sensor_scores: length mismatch");
    return (((1.0 - p.array()) + gamma2 * (x - x_hat).array().square()) / (1.0 + gamma2)).matrix();
}

TimeSeriesDataset align_to_model(const ModelState& model, const TimeSeriesDataset& ds)
{
    if (ds.series() != model.nodes()) {
        throw DataError("dataset has " + std::to_string(ds.series()) + " series, model expects " +
                        std::to_string(model.nodes()));
    }
    TimeSeriesDataset out = ds;
    out.names = model.names;
    out.modality = model.modality;
    for (int i = 0; i < model.nodes(); ++i) {
        const auto it = std::find(ds.names.begin(), ds.names.end(), model.names[static_cast<std::size_t>(i)]);
        if (it == ds.names.end()) throw DataError("series '" + model.names[static_cast<std::size_t>(i)] + "' missing from dataset");
        const auto src = static_cast<Eigen::Index>(it - ds.names.begin());
        out.values.row(i) = ds.values.row(src);
        if (!ds.modality.empty() && ds.modality[static_cast<std::size_t>(src)] != model.modality[static_cast<std::size_t>(i)]) {
            throw DataError("series '" + model.names[static_cast<std::size_t>(i)] + "' has a different modality than the model");
        }
    }
    return out;
}

ScoreTrace score_series(const ModelState& model, const TimeSeriesDataset& normalized, int batch_size)
{
    tune_allocator();
    const TimeSeriesDataset ds = align_to_model(model, normalized);
    const Config& cfg = model.config;
    const int w = cfg.window;
    const int n = model.nodes();
    const int t_len = ds.length();

    ScoreTrace trace;
    trace.names = model.names;
    trace.warmup = std::min(w, t_len);
    trace.sensor = Mat::Zero(t_len, n);
    trace.score = Vec::Zero(t_len);
    trace.threshold = model.calibration.threshold;

    if (t_len > w) {
        const auto windows = make_windows(ds, w, 1);
        const Network net(cfg);
        Rng rng(derive_seed(cfg.seed, "inference"));
        const auto count = static_cast<int>(windows.size());
        const auto all_eps = draw_eps(cfg.infer_samples, count, cfg.latent_dim, rng);
        Mat p(count, n);
        Mat forecast(count, n);
        std::vector<Mat> eps(all_eps.size());
        for (std::size_t begin = 0; begin < windows.size(); begin += static_cast<std::size_t>(batch_size)) {
            const std::size_t end = std::min(windows.size(), begin + static_cast<std::size_t>(batch_size));
            const WindowStack stack = stack_windows(windows, begin, end);
            for (std::size_t s = 0; s < eps.size(); ++s) {
                eps[s] = all_eps[s].middleRows(static_cast<Eigen::Index>(begin), stack.batch);
            }
            const InferenceOutput out = net.infer(model.params, model.topology, stack, eps);
            p.middleRows(static_cast<Eigen::Index>(begin), stack.batch) = out.p;
            forecast.middleRows(static_cast<Eigen::Index>(begin), stack.batch) = out.forecast;
        }
        // window k ends at column w - 1 + k
        for (int t = w; t < t_len; ++t) {
            const Eigen::Index k_now = t - (w - 1);
            const Vec s = per_sensor_scores(p.row(k_now).transpose(), ds.values.col(t),
                                            forecast.row(k_now - 1).transpose(), cfg.gamma2);
            trace.sensor.row(t) = s.transpose();
            trace.score(t) = s.sum();
        }
    }
    trace.detections = detect(trace, trace.threshold);
    return trace;
}

double empirical_quantile(std::vector<double> values, double level)
{
    if (values.empty()) throw DataError("empirical_quantile: no values");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(level, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

struct Profile {
    double xi;
    double sigma;
    double ll;
};

// Profile log-likelihood of the GPD at theta = xi / sigma.
Profile gpd_profile(std::span<const double> y, double theta)
{
    const double n = static_cast<double>(y.size());
    if (theta == 0.0) {
        const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
        return {0.0, mean, -n * std::log(mean) - n};
    }
    double s = 0.0;
    for (double v : y) {
        const double a = 1.0 + theta * v;
        if (a <= 0.0) return {0.0, 0.0, -std::numeric_limits<double>::infinity()};
        s += std::log(a);
    }
    const double xi = s / n;
    const double sigma = xi / theta;
    if (!(sigma > 0.0) || !std::isfinite(sigma)) return {xi, sigma, -std::numeric_limits<double>::infinity()};
    return {xi, sigma, -n * std::log(sigma) - (1.0 + 1.0 / xi) * s};
}

}  // namespace

GpdFit fit_gpd(std::span<const double> excesses)
{
    GpdFit fit;
    if (excesses.size() < 2) return fit;
    const double ymax = *std::max_element(excesses.begin(), excesses.end());
    const double ymean = std::accumulate(excesses.begin(), excesses.end(), 0.0) / static_cast<double>(excesses.size());
    if (!(ymax > 0.0) || !(ymean > 0.0)) return fit;

    const double lo = -(1.0 - 1e-9) / ymax;
    const double hi = 20.0 / ymean;
    constexpr int kGrid = 2000;

    // grid points with xi < -1 are skipped
    auto value = [&](double theta) {
        const Profile pr = gpd_profile(excesses, theta);
        if (pr.xi < -1.0) return -std::numeric_limits<double>::infinity();
        return pr.ll;
    };

    double best_theta = 0.0;
    double best_ll = value(0.0);
    double step = (hi - lo) / kGrid;
    for (int k = 0; k <= kGrid; ++k) {
        const double theta = lo + k * step;
        const double ll = value(theta);
        if (ll > best_ll) {
            best_ll = ll;
            best_theta = theta;
        }
    }

    // golden-section refinement inside the neighbouring grid cells
    double a = std::max(lo, best_theta - step);
    double b = std::min(hi, best_theta + step);
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - phi * (b - a);
    double d = a + phi * (b - a);
    double fc = value(c);
    double fd = value(d);
    for (int it = 0; it < 100 && (b - a) > 1e-14 * (1.0 + std::abs(best_theta)); ++it) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = value(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = value(d);
        }
    }
    const double refined = 0.5 * (a + b);
    if (value(refined) > best_ll) best_theta = refined;

    const Profile pr = gpd_profile(excesses, best_theta);
    fit.xi = pr.xi;
    fit.sigma = pr.sigma;
    fit.log_likelihood = pr.ll;
    fit.ok = std::isfinite(pr.ll) && pr.sigma > 0.0 && std::isfinite(pr.xi) && pr.xi >= -1.0;
    return fit;
}

double gpd_tail_quantile(double u, double xi, double sigma, double q, std::size_t n, std::size_t n_excess)
{
    const double r = q * static_cast<double>(n) / static_cast<double>(n_excess);
    if (std::abs(xi) < 1e-12) return u - sigma * std::log(r);
    return u + (sigma / xi) * (std::pow(r, -xi) - 1.0);
}

PotResult pot(std::span<const double> scores, double q, double init_level)
{
    if (scores.size() < 50) throw DataError("pot: need at least 50 scores, got " + std::to_string(scores.size()));
    if (!(q > 0.0 && q < init_level && init_level < 1.0)) throw UsageError("pot: need 0 < q < init_level < 1");

    std::vector<double> v(scores.begin(), scores.end());
    PotResult r;
    r.init_threshold = empirical_quantile(v, init_level);

    auto fallback = [&]() {
        r.fallback = true;
        const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
        if (*mn == *mx) {
            r.threshold = std::nextafter(*mx, std::numeric_limits<double>::infinity());
        } else {
            r.threshold = empirical_quantile(v, 1.0 - q);
        }
        return r;
    };

    std::vector<double> excess;
    for (double s : v) {
        if (s > r.init_threshold) excess.push_back(s - r.init_threshold);
    }
    r.excesses = excess.size();
    if (excess.size() < 10) return fallback();

    r.fit = fit_gpd(excess);
    if (!r.fit.ok) return fallback();
    r.threshold = gpd_tail_quantile(r.init_threshold, r.fit.xi, r.fit.sigma, q, v.size(), excess.size());
    if (!std::isfinite(r.threshold)) return fallback();
    return r;
}

double pot_threshold(std::span<const double> scores, double q, double init_level)
{
    return pot(scores, q, init_level).threshold;
}

std::vector<int> detect(const ScoreTrace& trace, double threshold)
{
    std::vector<int> out(static_cast<std::size_t>(trace.length()), 0);
    for (int t = trace.warmup; t < trace.length(); ++t) out[static_cast<std::size_t>(t)] = trace.score(t) > threshold ? 1 : 0;
    return out;
}

std::vector<SensorRank> interpret(const ScoreTrace& trace, int a, int b)
{
    if (a < 0 || b >= trace.length() || a > b) {
        throw DataError("interval [" + std::to_string(a) + ", " + std::to_string(b) + "] outside trace range [0, " +
                        std::to_string(trace.length() - 1) + "]");
    }
    std::vector<SensorRank> out;
    const auto n = static_cast<int>(trace.sensor.cols());
    for (int i = 0; i < n; ++i) {
        SensorRank s;
        s.index = i;
        s.name = i < static_cast<int>(trace.names.size()) ? trace.names[static_cast<std::size_t>(i)] : std::to_string(i);
        s.mean_score = trace.sensor.col(i).segment(a, b - a + 1).mean();
        out.push_back(std::move(s));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const SensorRank& x, const SensorRank& y) { return x.mean_score > y.mean_score; });
    return out;
}

void write_trace_csv(const std::string& path, const ScoreTrace& trace, const std::string& header_comment)
{
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out.precision(17);
    out << "# threshold=" << trace.threshold << " warmup=" << trace.warmup << "\n";
    out << "# names=";
    for (std::size_t i = 0; i < trace.names.size(); ++i) out << (i ? "," : "") << trace.names[i];
    out << "\n";
    out << "t,score,detected";
    for (Eigen::Index i = 0; i < trace.sensor.cols(); ++i) out << ",s_" << (i + 1);
    out << "\n";
    for (int t = 0; t < trace.length(); ++t) {
        out << t << "," << trace.score(t) << "," << trace.detections[static_cast<std::size_t>(t)];
        for (Eigen::Index i = 0; i < trace.sensor.cols(); ++i) out << "," << trace.sensor(t, i);
        out << "\n";
    }
}

ScoreTrace read_trace_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    ScoreTrace trace;
    std::string line;
    bool header_seen = false;
    std::size_t sensors = 0;
    std::vector<std::vector<double>> rows;
    std::vector<int> detections;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream meta(line.substr(1));
            std::string token;
            while (meta >> token) {
                if (token.rfind("threshold=", 0) == 0) trace.threshold = std::stod(token.substr(10));
                else if (token.rfind("warmup=", 0) == 0) trace.warmup = std::stoi(token.substr(7));
                else if (token.rfind("names=", 0) == 0) {
                    std::istringstream names(token.substr(6));
                    std::string name;
                    while (std::getline(names, name, ',')) trace.names.push_back(name);
                }
            }
            continue;
        }
        std::vector<std::string> cells;
        std::istringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!header_seen) {
            if (cells.size() < 3 || cells[0] != "t" || cells[1] != "score" || cells[2] != "detected") {
                throw DataError(path + ": expected header 't,score,detected,s_1,...'");
            }
            sensors = cells.size() - 3;
            header_seen = true;
            continue;
        }
        if (cells.size() != sensors + 3) throw DataError(path + ": ragged row");
        std::vector<double> row;
        try {
            for (std::size_t i = 0; i < sensors; ++i) row.push_back(std::stod(cells[i + 3]));
            detections.push_back(std::stoi(cells[2]));
        } catch (const std::exception&) {
            throw DataError(path + ": non-numeric cell");
        }
        rows.push_back(std::move(row));
    }
    if (!header_seen) throw DataError(path + ": empty trace");
    trace.sensor.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(sensors));
    for (std::size_t t = 0; t < rows.size(); ++t) {
        for (std::size_t i = 0; i < sensors; ++i) trace.sensor(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = rows[t][i];
    }
    trace.score = trace.sensor.rowwise().sum();
    trace.detections = std::move(detections);
    if (trace.names.size() != sensors) {
        trace.names.clear();
        for (std::size_t i = 0; i < sensors; ++i) trace.names.push_back("s_" + std::to_string(i + 1));
    }
    return trace;
}

}  // namespace mstgat
