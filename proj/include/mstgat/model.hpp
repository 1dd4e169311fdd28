#pragma once

#include "mstgat/common.hpp"
#include "mstgat/config.hpp"
#include "mstgat/dataset.hpp"
#include "mstgat/graph.hpp"
#include "mstgat/heads.hpp"
#include "mstgat/mgat.hpp"
#include "mstgat/temporal.hpp"

#include <string>
#include <utility>
#include <vector>

namespace mstgat {

struct ModelParams {
    Mat embeddings;  // N x d
    MgatParams mgat;
    TemporalParams temporal;
    VaeParams vae;
    PredictorParams predictor;

    template <class F>
    void visit(F&& f)
    {
        f(std::string("graph.embeddings"), embeddings);
        mgat.visit(f);
        temporal.visit(f);
        vae.visit(f);
        predictor.visit(f);
    }

    // Same shapes, all zeros.
    ModelParams zeros_like() const;

    // Flat (name, matrix) views in a fixed order.
    std::vector<std::pair<std::string, Mat*>> list();
    std::vector<std::pair<std::string, const Mat*>> list() const;

    std::size_t count() const;
};

struct Calibration {
    double threshold = 0.0;
    std::vector<double> val_scores;
};

struct LossRecord {
    int epoch = 0;
    double l_rec = 0.0;
    double l_pred = 0.0;
    double l_joint = 0.0;
};

struct ModelState {
    Config config;
    std::vector<std::string> names;
    std::vector<int> modality;
    NormStats norm;
    ModelParams params;
    GraphTopology topology;
    Calibration calibration;
    std::vector<LossRecord> loss_trace;

    int nodes() const { return static_cast<int>(names.size()); }
};

int effective_topk(const Config& cfg, int nodes);
MgatOptions mgat_options(const Config& cfg);
int temporal_input_channels(const Config& cfg);
int head_feature_channels(const Config& cfg);

ModelState init_model(const Config& cfg, const std::vector<std::string>& names, const std::vector<int>& modality,
                      const NormStats& norm);

// Recomputes all three adjacencies from the current embeddings.
GraphTopology rebuild_topology(const ModelState& state);

double joint_loss(double l_rec, double l_pred, double gamma1);

// Stacked batch of windows: (batch*N) x w values, batch x N next values.
struct WindowStack {
    int batch = 0;
    Mat windows;
    Mat next;
    std::vector<bool> has_next;
    std::vector<int> t_end;
};

WindowStack stack_windows(const std::vector<WindowBatch>& all, const std::vector<std::size_t>& indices);
WindowStack stack_windows(const std::vector<WindowBatch>& all, std::size_t begin, std::size_t end);

struct BatchLosses {
    double l_rec = 0.0;
    double l_pred = 0.0;
    double l_joint = 0.0;
};

struct InferenceOutput {
    Mat p;         // batch x N reconstruction probabilities
    Mat forecast;  // batch x N next-step forecasts
};

// End-to-end network: M-GAT -> temporal conv -> {VAE, predictor}.
class Network {
public:
    explicit Network(const Config& cfg);

    // Computes the joint loss and accumulates its gradient into `grad`.
    BatchLosses forward_backward(const ModelParams& p, const GraphTopology& topo, const WindowStack& batch,
                                 const std::vector<Mat>& eps, double kl_weight, double gamma1,
                                 ModelParams& grad) const;

    // Loss only; used by finite-difference checks.
    BatchLosses loss(const ModelParams& p, const GraphTopology& topo, const WindowStack& batch,
                     const std::vector<Mat>& eps, double kl_weight, double gamma1) const;

    InferenceOutput infer(const ModelParams& p, const GraphTopology& topo, const WindowStack& batch,
                          const std::vector<Mat>& eps) const;

    // Pooled head input for a batch: (batch*N) x C.
    Mat head_features(const ModelParams& p, const GraphTopology& topo, const WindowStack& batch) const;

private:
    Mgat mgat_;
    TemporalNet temporal_;
    Vae vae_;
    Predictor predictor_;
};

}  // namespace mstgat
