#pragma once

#include "mstgat/common.hpp"
#include "mstgat/config.hpp"
#include "mstgat/mgat.hpp"

#include <string>
#include <vector>

namespace mstgat {

// One kernel per layer, flattened to (width * C_in) x C_out with row
// index tap * C_in + channel. No bias: T' = relu(kernel * relu(T)).
struct TemporalParams {
    int width = 16;
    std::vector<Mat> kernels;

    template <class F>
    void visit(F&& f)
    {
        for (std::size_t l = 0; l < kernels.size(); ++l) f("temporal.layer" + std::to_string(l) + ".kernel", kernels[l]);
    }
};

// Throws UsageError when width > steps.
TemporalParams init_temporal_params(int width, int steps, int layers, int in_channels, int channels, Rng& rng);

// 1-D "same" convolution along the time axis of `input`, whose rows are
// grouped as (group, step). Shared weights across groups.
Mat temporal_conv(const Mat& input, int steps, const Mat& kernel, int width);

struct TemporalTrace {
    std::vector<Mat> inputs;   // layer inputs (pre-ReLU)
    std::vector<Mat> activations;  // relu(input)
    std::vector<Mat> pre;      // conv outputs before the outer ReLU
    Mat last;                  // features fed to pooling
    std::vector<Eigen::Index> argmax;
};

class TemporalNet {
public:
    TemporalNet(PoolMode pool, bool enabled) : pool_(pool), enabled_(enabled) {}

    // Returns (batch*nodes) x C_out pooled features.
    Mat forward(const LayerFeatures& feat, const TemporalParams& p, TemporalTrace* trace = nullptr) const;

    // Returns d timewise; accumulates kernel gradients.
    Mat backward(const TemporalTrace& trace, int steps, const TemporalParams& p, const Mat& d_pooled,
                 TemporalParams& grad) const;

    bool enabled() const { return enabled_; }

private:
    PoolMode pool_;
    bool enabled_;
};

Mat temporal_forward(const LayerFeatures& feat, const TemporalParams& p, PoolMode pool = PoolMode::Mean);

}  // namespace mstgat
