#pragma once

#include "mstgat/common.hpp"

#include <string>
#include <vector>

namespace mstgat {

// Gaussian VAE over the flattened per-window features. The decoder emits a
// mean and a clamped log-variance per series for the window's last reading.
struct VaeParams {
    Mat enc_w, enc_b;        // F x H, 1 x H
    Mat mu_w, mu_b;          // H x z
    Mat logsig_w, logsig_b;  // H x z   (log sigma of q(z|x))
    Mat dec_w, dec_b;        // z x H
    Mat out_mu_w, out_mu_b;  // H x N
    Mat out_lv_w, out_lv_b;  // H x N   (log variance of p(x|z))

    template <class F>
    void visit(F&& f)
    {
        f("vae.enc_w", enc_w);
        f("vae.enc_b", enc_b);
        f("vae.mu_w", mu_w);
        f("vae.mu_b", mu_b);
        f("vae.logsig_w", logsig_w);
        f("vae.logsig_b", logsig_b);
        f("vae.dec_w", dec_w);
        f("vae.dec_b", dec_b);
        f("vae.out_mu_w", out_mu_w);
        f("vae.out_mu_b", out_mu_b);
        f("vae.out_lv_w", out_lv_w);
        f("vae.out_lv_b", out_lv_b);
    }

    int latent() const { return static_cast<int>(mu_w.cols()); }
};

VaeParams init_vae_params(int feature_dim, int hidden, int latent, int nodes, Rng& rng);

struct ElboTerms {
    Vec nll;  // per window: sample-mean of sum_i -log N(x_i | mu_i, sigma_i^2)
    Vec kl;   // per window: KL(q(z|x) || N(0, I))
};

struct VaeOutput {
    Mat p;     // batch x N reconstruction probabilities in (0, 1]
    Mat mean;  // batch x N decoder mean, averaged over samples
    ElboTerms terms;
};

// Reconstruction probability kernel exp(-(x - mu)^2 / (2 sigma^2)).
double reconstruction_probability(double x, double mu, double logvar);

struct VaeTrace {
    Mat x, h_pre, mu_z, logsig_z;
    Mat target;
    std::vector<Mat> eps, z, d_pre, out_mu, lv_raw, lv;
};

class Vae {
public:
    Vae(double logvar_min, double logvar_max) : lv_min_(logvar_min), lv_max_(logvar_max) {}

    // `features` is (batch*N) x C; `eps` holds one batch x z standard-normal
    // draw per Monte-Carlo sample; `target` is batch x N.
    VaeOutput forward(const Mat& features, int batch, const Mat& target, const VaeParams& p,
                      const std::vector<Mat>& eps, VaeTrace* trace = nullptr) const;

    // Loss = nll_coef * sum_b nll_b + kl_coef * sum_b kl_b. Returns d features.
    Mat backward(const VaeTrace& trace, const VaeParams& p, double nll_coef, double kl_coef, VaeParams& grad) const;

    double logvar_min() const { return lv_min_; }
    double logvar_max() const { return lv_max_; }

private:
    double lv_min_;
    double lv_max_;
};

std::vector<Mat> draw_eps(int samples, int batch, int latent, Rng& rng);

// Single-window convenience: target is the last column of `raw_window` (N x w).
VaeOutput vae_forward(const Mat& features, const Mat& raw_window, const VaeParams& p, int samples, Rng& rng,
                      double logvar_min = -6.0, double logvar_max = 2.0);

// Negative ELBO averaged over the batch.
double reconstruction_loss(const ElboTerms& terms, double kl_weight = 1.0);

// Shared per-node MLP on [features_i || v_i] with two ReLU hidden layers.
struct PredictorParams {
    Mat w1, b1;  // (C + d) x H
    Mat w2, b2;  // H x H
    Mat w3, b3;  // H x 1

    template <class F>
    void visit(F&& f)
    {
        f("predictor.w1", w1);
        f("predictor.b1", b1);
        f("predictor.w2", w2);
        f("predictor.b2", b2);
        f("predictor.w3", w3);
        f("predictor.b3", b3);
    }
};

PredictorParams init_predictor_params(int feature_dim, int embed_dim, int hidden, Rng& rng);

struct PredictorTrace {
    Mat input, pre1, pre2;
};

class Predictor {
public:
    // Returns batch x N forecasts.
    Mat forward(const Mat& features, const Mat& embeddings, const PredictorParams& p,
                PredictorTrace* trace = nullptr) const;

    // Accumulates parameter gradients; returns d features and adds to d_embeddings.
    Mat backward(const PredictorTrace& trace, const PredictorParams& p, const Mat& d_forecast, int nodes,
                 PredictorParams& grad, Mat& d_embeddings) const;
};

Mat predict_next(const Mat& features, const Mat& embeddings, const PredictorParams& p);

// Mean over windows with a target of sqrt(sum_i (x - x_hat)^2). Rows whose
// `has_target` entry is false are excluded. Optionally returns d/d forecast.
double prediction_loss(const Mat& forecasts, const Mat& targets, const std::vector<bool>& has_target,
                       Mat* d_forecast = nullptr);

}  // namespace mstgat
