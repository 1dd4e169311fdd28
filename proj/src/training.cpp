#include "mstgat/training.hpp"

#include "mstgat/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mstgat {

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ModelParams& params, const ModelParams& grad)
{
    auto p = params.list();
    const auto g = grad.list();
    if (m_.empty()) {
        for (const auto& [name, m] : p) {
            m_.push_back(Mat::Zero(m->rows(), m->cols()));
            v_.push_back(Mat::Zero(m->rows(), m->cols()));
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < p.size(); ++i) {
        const Mat& gi = *g[i].second;
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * gi;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * gi.cwiseProduct(gi);
        p[i].second->array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
}

double clip_global_norm(ModelParams& grad, double max_norm)
{
    double sq = 0.0;
    for (const auto& [name, m] : grad.list()) sq += m->squaredNorm();
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        grad.visit([s](const std::string&, Mat& m) { m *= s; });
    }
    return norm;
}

double kl_weight(int epoch, int warmup_epochs)
{
    if (warmup_epochs <= 0) return 1.0;
    return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(warmup_epochs));
}

ValidationSplit split_validation(const TimeSeriesDataset& normalized, const Config& cfg)
{
    const int t_len = normalized.length();
    const int w = cfg.window;
    const int n_val = static_cast<int>(std::lround(cfg.val_fraction * t_len));
    const int fit_end = t_len - n_val;
    if (n_val < 1 || fit_end < w + 1) {
        throw DataError("training series of length " + std::to_string(t_len) +
                        " is too short for window " + std::to_string(w) + " with a validation tail");
    }
    ValidationSplit s;
    s.fit = normalized.slice(0, fit_end);
    s.context = w;
    s.validation = normalized.slice(fit_end - w, t_len);
    return s;
}

void calibrate(ModelState& state, const TimeSeriesDataset& validation)
{
    const ScoreTrace trace = score_series(state, validation);
    std::vector<double> scores;
    for (int t = trace.warmup; t < trace.length(); ++t) scores.push_back(trace.score(t));
    state.calibration.val_scores = scores;
    state.calibration.threshold = pot_threshold(scores, state.config.pot_q, state.config.pot_init_level);
}

ModelState train(const TimeSeriesDataset& fit, const TimeSeriesDataset& validation, const Config& cfg,
                 const NormStats& norm, const TrainOptions& options)
{
    cfg.validate();
    fit.validate();
    tune_allocator();
    ModelState state = init_model(cfg, fit.names, fit.modality, norm);

    const auto windows = make_windows(fit, cfg.window, cfg.stride);
    if (windows.empty()) throw DataError("no training windows: series shorter than the window");

    const Network net(cfg);
    Adam opt(cfg.lr);
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
    Rng noise_rng(derive_seed(cfg.seed, "train-noise"));
    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        state.topology = rebuild_topology(state);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const double klw = kl_weight(epoch, cfg.kl_warmup_epochs);

        LossRecord rec;
        rec.epoch = epoch;
        std::size_t seen = 0;
        int batch_no = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch), ++batch_no) {
            const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch));
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                               order.begin() + static_cast<std::ptrdiff_t>(end));
            const WindowStack stack = stack_windows(windows, idx);
            const auto eps = draw_eps(cfg.train_samples, stack.batch, cfg.latent_dim, noise_rng);

            ModelParams grad = state.params.zeros_like();
            BatchLosses l;
            try {
                l = net.forward_backward(state.params, state.topology, stack, eps, klw, cfg.gamma1, grad);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_no) + ")");
            }
            if (!std::isfinite(l.l_joint)) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_no));
            }
            clip_global_norm(grad, cfg.grad_clip);
            opt.step(state.params, grad);

            const double wgt = static_cast<double>(stack.batch);
            rec.l_rec += wgt * l.l_rec;
            rec.l_pred += wgt * l.l_pred;
            rec.l_joint += wgt * l.l_joint;
            seen += idx.size();
        }
        rec.l_rec /= static_cast<double>(seen);
        rec.l_pred /= static_cast<double>(seen);
        rec.l_joint /= static_cast<double>(seen);
        state.loss_trace.push_back(rec);
        if (options.on_epoch) options.on_epoch(rec);
    }

    state.topology = rebuild_topology(state);
    if (options.calibrate) calibrate(state, validation);
    return state;
}

ModelState train_from_raw(const TimeSeriesDataset& raw_train, const Config& cfg, const TrainOptions& options,
                          std::vector<std::string>* warnings)
{
    raw_train.validate();
    const NormStats stats = fit_norm(raw_train, warnings);
    const TimeSeriesDataset normalized = apply_norm(raw_train, stats, false);
    const ValidationSplit split = split_validation(normalized, cfg);
    return train(split.fit, split.validation, cfg, stats, options);
}

}  // namespace mstgat
