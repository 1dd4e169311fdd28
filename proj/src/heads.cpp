#include "mstgat/heads.hpp"

#include <cmath>
#include <numbers>

namespace mstgat {

namespace {

Mat glorot(int rows, int cols, Rng& rng)
{
    Mat m(rows, cols);
    glorot_uniform(m, rng);
    return m;
}

Mat affine(const Mat& x, const Mat& w, const Mat& b)
{
    Mat y = x * w;
    y.rowwise() += b.row(0);
    return y;
}

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

VaeParams init_vae_params(int feature_dim, int hidden, int latent, int nodes, Rng& rng)
{
    VaeParams p;
    p.enc_w = glorot(feature_dim, hidden, rng);
    p.enc_b = Mat::Zero(1, hidden);
    p.mu_w = glorot(hidden, latent, rng);
    p.mu_b = Mat::Zero(1, latent);
    p.logsig_w = glorot(hidden, latent, rng);
    p.logsig_b = Mat::Zero(1, latent);
    p.dec_w = glorot(latent, hidden, rng);
    p.dec_b = Mat::Zero(1, hidden);
    p.out_mu_w = glorot(hidden, nodes, rng);
    p.out_mu_b = Mat::Zero(1, nodes);
    p.out_lv_w = glorot(hidden, nodes, rng);
    p.out_lv_b = Mat::Zero(1, nodes);
    return p;
}

double reconstruction_probability(double x, double mu, double logvar)
{
    const double e = x - mu;
    return std::exp(-e * e / (2.0 * std::exp(logvar)));
}

std::vector<Mat> draw_eps(int samples, int batch, int latent, Rng& rng)
{
    std::vector<Mat> eps;
    for (int s = 0; s < samples; ++s) {
        Mat e(batch, latent);
        normal_fill(e, rng);
        eps.push_back(std::move(e));
    }
    return eps;
}

VaeOutput Vae::forward(const Mat& features, int batch, const Mat& target, const VaeParams& p,
                       const std::vector<Mat>& eps, VaeTrace* trace) const
{
    VaeTrace local;
    VaeTrace& t = trace ? *trace : local;
    const Eigen::Index n = target.cols();
    if (features.size() != p.enc_w.rows() * batch) throw DataError("vae_forward: feature size does not match encoder");
    if (eps.empty()) throw DataError("vae_forward: need at least one latent sample");

    t.x = Eigen::Map<const Mat>(features.data(), batch, p.enc_w.rows());
    t.target = target;
    t.h_pre = affine(t.x, p.enc_w, p.enc_b);
    const Mat h = relu(t.h_pre);
    t.mu_z = affine(h, p.mu_w, p.mu_b);
    t.logsig_z = affine(h, p.logsig_w, p.logsig_b);
    if (!t.mu_z.allFinite() || !t.logsig_z.allFinite()) throw NumericError("vae_forward: non-finite encoder output");
    const Mat sig_z = t.logsig_z.array().exp().matrix();

    VaeOutput out;
    out.p = Mat::Zero(batch, n);
    out.mean = Mat::Zero(batch, n);
    out.terms.nll = Vec::Zero(batch);
    out.terms.kl = 0.5 * (t.mu_z.array().square() + sig_z.array().square() - 1.0 - 2.0 * t.logsig_z.array())
                             .rowwise()
                             .sum()
                             .matrix();

    const auto samples = eps.size();
    t.eps = eps;
    t.z.assign(samples, {});
    t.d_pre.assign(samples, {});
    t.out_mu.assign(samples, {});
    t.lv_raw.assign(samples, {});
    t.lv.assign(samples, {});
    for (std::size_t s = 0; s < samples; ++s) {
        t.z[s] = t.mu_z + sig_z.cwiseProduct(eps[s]);
        t.d_pre[s] = affine(t.z[s], p.dec_w, p.dec_b);
        const Mat hd = relu(t.d_pre[s]);
        t.out_mu[s] = affine(hd, p.out_mu_w, p.out_mu_b);
        t.lv_raw[s] = affine(hd, p.out_lv_w, p.out_lv_b);
        t.lv[s] = t.lv_raw[s].cwiseMax(lv_min_).cwiseMin(lv_max_);

        const auto err2 = (target - t.out_mu[s]).array().square();
        const auto inv_var = (-t.lv[s].array()).exp();
        out.terms.nll += (kHalfLog2Pi + 0.5 * t.lv[s].array() + 0.5 * err2 * inv_var).rowwise().sum().matrix();
        out.p.array() += (-0.5 * err2 * inv_var).exp();
        out.mean += t.out_mu[s];
    }
    const double inv = 1.0 / static_cast<double>(samples);
    out.terms.nll *= inv;
    out.p *= inv;
    out.mean *= inv;
    return out;
}

Mat Vae::backward(const VaeTrace& t, const VaeParams& p, double nll_coef, double kl_coef, VaeParams& g) const
{
    const auto samples = t.eps.size();
    const double per_sample = nll_coef / static_cast<double>(samples);
    const Mat sig_z = t.logsig_z.array().exp().matrix();

    Mat d_mu_z = kl_coef * t.mu_z;
    Mat d_logsig_z = (kl_coef * (sig_z.array().square() - 1.0)).matrix();

    for (std::size_t s = 0; s < samples; ++s) {
        const Mat err = t.target - t.out_mu[s];
        const Mat inv_var = (-t.lv[s].array()).exp().matrix();
        const Mat d_mu = (-per_sample * err.cwiseProduct(inv_var));
        Mat d_lv = (per_sample * (0.5 - 0.5 * err.array().square() * inv_var.array())).matrix();
        d_lv = (t.lv_raw[s].array() > lv_min_ && t.lv_raw[s].array() < lv_max_).select(d_lv, 0.0);

        const Mat hd = relu(t.d_pre[s]);
        g.out_mu_w.noalias() += hd.transpose() * d_mu;
        g.out_mu_b += d_mu.colwise().sum();
        g.out_lv_w.noalias() += hd.transpose() * d_lv;
        g.out_lv_b += d_lv.colwise().sum();
        Mat d_hd = d_mu * p.out_mu_w.transpose() + d_lv * p.out_lv_w.transpose();
        relu_backward_inplace(d_hd, t.d_pre[s]);
        g.dec_w.noalias() += t.z[s].transpose() * d_hd;
        g.dec_b += d_hd.colwise().sum();
        const Mat d_z = d_hd * p.dec_w.transpose();
        d_mu_z += d_z;
        d_logsig_z += d_z.cwiseProduct(sig_z).cwiseProduct(t.eps[s]);
    }

    const Mat h = relu(t.h_pre);
    g.mu_w.noalias() += h.transpose() * d_mu_z;
    g.mu_b += d_mu_z.colwise().sum();
    g.logsig_w.noalias() += h.transpose() * d_logsig_z;
    g.logsig_b += d_logsig_z.colwise().sum();
    Mat d_h = d_mu_z * p.mu_w.transpose() + d_logsig_z * p.logsig_w.transpose();
    relu_backward_inplace(d_h, t.h_pre);
    g.enc_w.noalias() += t.x.transpose() * d_h;
    g.enc_b += d_h.colwise().sum();
    const Mat d_x = d_h * p.enc_w.transpose();
    // back to (batch*N) x C layout; row-major storage makes this a reshape
    const Eigen::Index channels = d_x.cols() / (t.target.cols());
    return Eigen::Map<const Mat>(d_x.data(), d_x.rows() * t.target.cols(), channels);
}

VaeOutput vae_forward(const Mat& features, const Mat& raw_window, const VaeParams& p, int samples, Rng& rng,
                      double logvar_min, double logvar_max)
{
    const Mat target = raw_window.col(raw_window.cols() - 1).transpose();
    const auto eps = draw_eps(samples, 1, p.latent(), rng);
    return Vae(logvar_min, logvar_max).forward(features, 1, target, p, eps);
}

double reconstruction_loss(const ElboTerms& terms, double kl_weight)
{
    if (terms.nll.size() == 0) return 0.0;
    return (terms.nll + kl_weight * terms.kl).mean();
}

PredictorParams init_predictor_params(int feature_dim, int embed_dim, int hidden, Rng& rng)
{
    PredictorParams p;
    p.w1 = glorot(feature_dim + embed_dim, hidden, rng);
    p.b1 = Mat::Zero(1, hidden);
    p.w2 = glorot(hidden, hidden, rng);
    p.b2 = Mat::Zero(1, hidden);
    p.w3 = glorot(hidden, 1, rng);
    p.b3 = Mat::Zero(1, 1);
    return p;
}

Mat Predictor::forward(const Mat& features, const Mat& embeddings, const PredictorParams& p,
                       PredictorTrace* trace) const
{
    PredictorTrace local;
    PredictorTrace& t = trace ? *trace : local;
    const Eigen::Index n = embeddings.rows();
    const Eigen::Index batch = features.rows() / n;
    const Eigen::Index c = features.cols();
    t.input.resize(features.rows(), c + embeddings.cols());
    t.input.leftCols(c) = features;
    for (Eigen::Index b = 0; b < batch; ++b) t.input.block(b * n, c, n, embeddings.cols()) = embeddings;
    t.pre1 = affine(t.input, p.w1, p.b1);
    t.pre2 = affine(relu(t.pre1), p.w2, p.b2);
    const Mat y = affine(relu(t.pre2), p.w3, p.b3);
    return Eigen::Map<const Mat>(y.data(), batch, n);
}

Mat Predictor::backward(const PredictorTrace& t, const PredictorParams& p, const Mat& d_forecast, int nodes,
                        PredictorParams& g, Mat& d_embeddings) const
{
    const Mat dy = Eigen::Map<const Mat>(d_forecast.data(), d_forecast.size(), 1);
    const Mat h2 = relu(t.pre2);
    g.w3.noalias() += h2.transpose() * dy;
    g.b3 += dy.colwise().sum();
    Mat d2 = dy * p.w3.transpose();
    relu_backward_inplace(d2, t.pre2);
    const Mat h1 = relu(t.pre1);
    g.w2.noalias() += h1.transpose() * d2;
    g.b2 += d2.colwise().sum();
    Mat d1 = d2 * p.w2.transpose();
    relu_backward_inplace(d1, t.pre1);
    g.w1.noalias() += t.input.transpose() * d1;
    g.b1 += d1.colwise().sum();
    const Mat d_in = d1 * p.w1.transpose();

    const Eigen::Index d = d_embeddings.cols();
    const Eigen::Index c = d_in.cols() - d;
    const Eigen::Index batch = d_in.rows() / nodes;
    for (Eigen::Index b = 0; b < batch; ++b) d_embeddings += d_in.block(b * nodes, c, nodes, d);
    return d_in.leftCols(c);
}

Mat predict_next(const Mat& features, const Mat& embeddings, const PredictorParams& p)
{
    return Predictor().forward(features, embeddings, p);
}

double prediction_loss(const Mat& forecasts, const Mat& targets, const std::vector<bool>& has_target, Mat* d_forecast)
{
    if (forecasts.rows() != targets.rows() || forecasts.cols() != targets.cols() ||
        static_cast<Eigen::Index>(has_target.size()) != forecasts.rows()) {
        throw DataError("prediction_loss: shape mismatch");
    }
    int used = 0;
    for (bool h : has_target) used += h ? 1 : 0;
    if (d_forecast) *d_forecast = Mat::Zero(forecasts.rows(), forecasts.cols());
    if (used == 0) return 0.0;

    double total = 0.0;
    for (Eigen::Index b = 0; b < forecasts.rows(); ++b) {
        if (!has_target[static_cast<std::size_t>(b)]) continue;
        const RowVec err = targets.row(b) - forecasts.row(b);
        const double norm = err.norm();
        total += norm;
        // zero subgradient at 0
        if (d_forecast && norm > 0.0) d_forecast->row(b) = -err / (norm * used);
    }
    return total / used;
}

}  // namespace mstgat
