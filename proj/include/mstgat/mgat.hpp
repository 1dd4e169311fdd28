#pragma once

#include "mstgat/common.hpp"
#include "mstgat/graph.hpp"

#include <string>
#include <vector>

namespace mstgat {

// Features for a batch of windows. `summary` holds one row per (window, node)
// and drives attention scoring; `timewise` holds one row per (window, node,
// time step) and is what the attention weights aggregate.
struct LayerFeatures {
    int batch = 0;
    int nodes = 0;
    int steps = 0;
    Mat summary;   // (batch*nodes) x D
    Mat timewise;  // (batch*nodes*steps) x C
    int shared_tail = 0;  // trailing summary columns that are identical for every window

    int summary_width() const { return static_cast<int>(summary.cols()); }
    int channels() const { return static_cast<int>(timewise.cols()); }
};

struct InputParams {
    Mat w_in;    // w x d
    Mat lift_w;  // 1 x c0, shared per scalar reading
    Mat lift_b;  // 1 x c0

    template <class F>
    void visit(const std::string& prefix, F&& f)
    {
        f(prefix + "w_in", w_in);
        f(prefix + "lift_w", lift_w);
        f(prefix + "lift_b", lift_b);
    }
};

// Relational attention scored from embeddings only:
// g_ij = sigmoid(relu([v_i || v_j] w1 + b1) w2).
struct RelationParams {
    Mat w1;     // 2d x H
    Mat b1;     // 1 x H
    Mat w2;     // H x 1
    Mat value;  // C_in x C

    template <class F>
    void visit(const std::string& prefix, F&& f)
    {
        f(prefix + "w1", w1);
        f(prefix + "b1", b1);
        f(prefix + "w2", w2);
        f(prefix + "value", value);
    }
};

struct MgatLayerParams {
    Mat query;  // D x D, head s owns columns [s*D/S, (s+1)*D/S)
    Mat key;    // D x D
    Mat value;  // C_in x C, head s owns columns [s*C/S, (s+1)*C/S)
    RelationParams intra;
    RelationParams inter;
    Mat w_out;  // (C or 3C) x C
    Mat b_out;  // 1 x C

    template <class F>
    void visit(const std::string& prefix, F&& f)
    {
        f(prefix + "query", query);
        f(prefix + "key", key);
        f(prefix + "value", value);
        intra.visit(prefix + "intra.", f);
        inter.visit(prefix + "inter.", f);
        f(prefix + "w_out", w_out);
        f(prefix + "b_out", b_out);
    }
};

struct MgatOptions {
    int heads = 4;
    bool modal = true;               // intra/inter branches present
    bool uniform_attention = false;  // alpha = 1/|N_i|
};

struct MgatParams {
    InputParams input;
    std::vector<MgatLayerParams> layers;

    template <class F>
    void visit(F&& f)
    {
        input.visit("mgat.input.", f);
        for (std::size_t l = 0; l < layers.size(); ++l) layers[l].visit("mgat.layer" + std::to_string(l) + ".", f);
    }
};

struct MgatShape {
    int nodes = 0;
    int window = 0;
    int embed_dim = 0;
    int lift_channels = 8;
    int channels = 16;
    int relation_hidden = 64;
    int layers = 1;
};

MgatParams init_mgat_params(const MgatShape& shape, const MgatOptions& opt, Rng& rng);

// H0 = (X W_in) || V for the summary; timewise is the per-reading lift.
// `windows` stacks the batch as (batch*N) x w.
LayerFeatures initial_features(const Mat& windows, int batch, const Mat& embeddings, const InputParams& p);

struct MultiHeadOutput {
    Mat out;                 // (batch*N*w) x C
    std::vector<Mat> alpha;  // batch*heads matrices, N x N, zero off-neighbourhood
};

MultiHeadOutput multi_head_attention(const LayerFeatures& feat, const AdjMat& adj, const MgatLayerParams& p,
                                     const MgatOptions& opt);

struct RelationalOutput {
    Mat out;   // (batch*N*w) x C
    Mat beta;  // N x N, shared by every window in the batch
};

RelationalOutput relational_attention(const LayerFeatures& feat, const Mat& embeddings, const AdjMat& adj,
                                      const RelationParams& p);

// o = att || intra || inter (intra/inter may be empty); h = relu(o W_out + b_out)
// per time slice, and on the time-mean of o for the summary.
LayerFeatures fuse(const LayerFeatures& shape_of, const Mat& att, const Mat& intra, const Mat& inter,
                   const MgatLayerParams& p);

// Cached intermediates for one forward pass, consumed by backward().
struct MgatTrace {
    struct Layer {
        LayerFeatures input;
        Mat q, k, v;
        std::vector<Mat> alpha;
        struct Rel {
            std::vector<std::vector<int>> nbrs;
            std::vector<std::vector<RowVec>> pre;  // per (i, neighbour) hidden pre-activation
            std::vector<std::vector<double>> g;
            Mat beta;
            Mat v;
        } intra, inter;
        Mat o, pre_t, o_mean, pre_s;
    };
    Mat windows;
    std::vector<std::vector<int>> topk_nbrs;
    std::vector<Layer> layers;
};

class Mgat {
public:
    explicit Mgat(MgatOptions opt) : opt_(opt) {}

    const MgatOptions& options() const { return opt_; }

    LayerFeatures forward(const Mat& windows, int batch, const Mat& embeddings, const GraphTopology& topo,
                          const MgatParams& p, MgatTrace* trace = nullptr) const;

    // Accumulates into grad / d_embeddings.
    void backward(const MgatTrace& trace, const Mat& embeddings, const MgatParams& p, const LayerFeatures& d_out,
                  MgatParams& grad, Mat& d_embeddings) const;

private:
    MgatOptions opt_;
};

LayerFeatures mgat_forward(const Mat& window, const Mat& embeddings, const GraphTopology& topo, const MgatParams& p,
                           const MgatOptions& opt);

}  // namespace mstgat
