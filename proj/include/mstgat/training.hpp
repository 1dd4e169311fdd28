#pragma once

#include "mstgat/config.hpp"
#include "mstgat/dataset.hpp"
#include "mstgat/model.hpp"

#include <functional>
#include <vector>

namespace mstgat {

class Adam {
public:
    Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(ModelParams& params, const ModelParams& grad);
    long steps() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Mat> m_, v_;
};

// Rescales the gradient in place when its global L2 norm exceeds max_norm.
// Returns the norm before clipping.
double clip_global_norm(ModelParams& grad, double max_norm);

// Linear KL warm-up: min(1, epoch / warmup_epochs) for 1-based epochs.
double kl_weight(int epoch, int warmup_epochs);

// Chronological split of normalized training data. `validation` starts
// `context` columns before the held-out tail so its first window ends on the
// first held-out timestamp.
struct ValidationSplit {
    TimeSeriesDataset fit;
    TimeSeriesDataset validation;
    int context = 0;
};

ValidationSplit split_validation(const TimeSeriesDataset& normalized, const Config& cfg);

struct TrainOptions {
    std::function<void(const LossRecord&)> on_epoch;
    bool calibrate = true;
};

// Fits a model on already-normalized data. The returned state carries the
// per-epoch loss trace and, when calibrate is set, validation scores and the
// POT threshold computed from them.
ModelState train(const TimeSeriesDataset& fit, const TimeSeriesDataset& validation, const Config& cfg,
                 const NormStats& norm, const TrainOptions& options = {});

// Normalizes raw training data, splits off validation, trains and calibrates.
ModelState train_from_raw(const TimeSeriesDataset& raw_train, const Config& cfg, const TrainOptions& options = {},
                          std::vector<std::string>* warnings = nullptr);

// Validation scores and threshold for an already trained state.
void calibrate(ModelState& state, const TimeSeriesDataset& validation);

}  // namespace mstgat
