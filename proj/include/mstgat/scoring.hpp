#pragma once

#include "mstgat/common.hpp"
#include "mstgat/dataset.hpp"
#include "mstgat/model.hpp"

#include <span>
#include <string>
#include <vector>

namespace mstgat {

// s_i = ((1 - p_i) + gamma2 * (x_i - x_hat_i)^2) / (1 + gamma2)
Vec per_sensor_scores(const Vec& p, const Vec& x, const Vec& x_hat, double gamma2);

struct ScoreTrace {
    std::vector<std::string> names;
    int warmup = 0;             // timestamps [0, warmup) are unscored
    Mat sensor;                 // T x N per-sensor scores
    Vec score;                  // T aggregate (row sums of sensor)
    double threshold = 0.0;
    std::vector<int> detections;

    int length() const { return static_cast<int>(score.size()); }
};

// Scores every timestamp t >= w: reconstruction from the window ending at t,
// forecast from the window ending at t - 1. `normalized` must already be
// scaled with the model's NormStats; its series are matched to the model by
// name. Monte-Carlo draws use a fixed seed, so the result is deterministic.
ScoreTrace score_series(const ModelState& model, const TimeSeriesDataset& normalized, int batch_size = 256);

// Reorders `ds` into the model's series order; throws DataError on mismatch.
TimeSeriesDataset align_to_model(const ModelState& model, const TimeSeriesDataset& ds);

// Linear-interpolated empirical quantile (level in [0, 1]).
double empirical_quantile(std::vector<double> values, double level);

struct GpdFit {
    double xi = 0.0;
    double sigma = 0.0;
    double log_likelihood = 0.0;
    bool ok = false;
};

// Maximum-likelihood generalized Pareto fit of positive excesses, via a grid
// over theta = xi / sigma refined by golden-section search.
GpdFit fit_gpd(std::span<const double> excesses);

// Level exceeded with probability q given a tail fit above u.
double gpd_tail_quantile(double u, double xi, double sigma, double q, std::size_t n, std::size_t n_excess);

struct PotResult {
    double threshold = 0.0;
    double init_threshold = 0.0;
    std::size_t excesses = 0;
    GpdFit fit;
    bool fallback = false;
};

// Peaks-over-threshold: requires at least 50 scores and 0 < q < init_level < 1.
PotResult pot(std::span<const double> scores, double q, double init_level);
double pot_threshold(std::span<const double> scores, double q, double init_level);

// 1 iff score > threshold (strict), never inside the warm-up region.
std::vector<int> detect(const ScoreTrace& trace, double threshold);

struct SensorRank {
    std::string name;
    int index = 0;
    double mean_score = 0.0;
};

// Sensors ranked by mean per-sensor score over [a, b] (inclusive); ties keep
// ascending series order.
std::vector<SensorRank> interpret(const ScoreTrace& trace, int a, int b);

void write_trace_csv(const std::string& path, const ScoreTrace& trace, const std::string& header_comment);
ScoreTrace read_trace_csv(const std::string& path);

}  // namespace mstgat
