#include "mstgat/temporal.hpp"

#include <algorithm>
#include <utility>

namespace mstgat {

namespace {

int left_pad(int width) { return (width - 1) / 2; }

// Groups per im2col chunk, about 64k entries per chunk.
int chunk_groups(int steps, int width, Eigen::Index cin)
{
    const Eigen::Index per_group = static_cast<Eigen::Index>(steps) * width * cin;
    return static_cast<int>(std::max<Eigen::Index>(1, 65536 / std::max<Eigen::Index>(1, per_group)));
}

// Columns for groups [g0, g0 + count): row (g, t) holds act(g, t + k - pad) at
// block k, zero outside the window.
void im2col(const Mat& act, int steps, int width, int g0, int count, Mat& col)
{
    const Eigen::Index cin = act.cols();
    const int pad = left_pad(width);
    col.setZero(static_cast<Eigen::Index>(count) * steps, width * cin);
    for (int g = 0; g < count; ++g) {
        const Eigen::Index src0 = static_cast<Eigen::Index>(g0 + g) * steps;
        const Eigen::Index dst0 = static_cast<Eigen::Index>(g) * steps;
        for (int k = 0; k < width; ++k) {
            const int lo = std::max(0, pad - k);
            const int hi = std::min(steps, steps + pad - k);
            if (lo >= hi) continue;
            col.block(dst0 + lo, k * cin, hi - lo, cin) = act.middleRows(src0 + lo + k - pad, hi - lo);
        }
    }
}

void col2im_add(const Mat& dcol, int steps, int width, int g0, int count, Mat& dact)
{
    const Eigen::Index cin = dact.cols();
    const int pad = left_pad(width);
    for (int g = 0; g < count; ++g) {
        const Eigen::Index dst0 = static_cast<Eigen::Index>(g0 + g) * steps;
        const Eigen::Index src0 = static_cast<Eigen::Index>(g) * steps;
        for (int k = 0; k < width; ++k) {
            const int lo = std::max(0, pad - k);
            const int hi = std::min(steps, steps + pad - k);
            if (lo >= hi) continue;
            dact.middleRows(dst0 + lo + k - pad, hi - lo) += dcol.block(src0 + lo, k * cin, hi - lo, cin);
        }
    }
}

Mat conv_same(const Mat& act, int steps, const Mat& kernel, int width)
{
    const int groups = static_cast<int>(act.rows() / steps);
    const int chunk = chunk_groups(steps, width, act.cols());
    Mat out(act.rows(), kernel.cols());
    Mat col;
    for (int g0 = 0; g0 < groups; g0 += chunk) {
        const int count = std::min(chunk, groups - g0);
        im2col(act, steps, width, g0, count, col);
        out.middleRows(static_cast<Eigen::Index>(g0) * steps, static_cast<Eigen::Index>(count) * steps).noalias() =
            col * kernel;
    }
    return out;
}

}  // namespace

TemporalParams init_temporal_params(int width, int steps, int layers, int in_channels, int channels, Rng& rng)
{
    if (width < 1 || width > steps) {
        throw UsageError("temporal kernel width " + std::to_string(width) + " must be in [1, " +
                         std::to_string(steps) + "]");
    }
    TemporalParams p;
    p.width = width;
    int cin = in_channels;
    for (int l = 0; l < layers; ++l) {
        // He-uniform over the receptive field
        Mat k(width * cin, channels);
        const double bound = std::sqrt(6.0 / static_cast<double>(width * cin));
        uniform_fill(k, -bound, bound, rng);
        p.kernels.push_back(std::move(k));
        cin = channels;
    }
    return p;
}

Mat temporal_conv(const Mat& input, int steps, const Mat& kernel, int width)
{
    if (width > steps) throw UsageError("temporal_conv: kernel width exceeds window length");
    if (kernel.rows() != width * input.cols()) throw DataError("temporal_conv: kernel shape mismatch");
    return relu(conv_same(relu(input), steps, kernel, width));
}

Mat TemporalNet::forward(const LayerFeatures& feat, const TemporalParams& p, TemporalTrace* trace) const
{
    TemporalTrace local;
    TemporalTrace& t = trace ? *trace : local;
    t.inputs.clear();
    t.activations.clear();
    t.pre.clear();

    Mat x = feat.timewise;
    if (enabled_) {
        for (const Mat& kernel : p.kernels) {
            Mat act = relu(x);
            Mat pre = conv_same(act, feat.steps, kernel, p.width);
            t.inputs.push_back(std::move(x));
            x = relu(pre);
            t.activations.push_back(std::move(act));
            t.pre.push_back(std::move(pre));
        }
    }

    const int groups = feat.batch * feat.nodes;
    const int w = feat.steps;
    Mat pooled(groups, x.cols());
    if (pool_ == PoolMode::Mean) {
        for (int g = 0; g < groups; ++g) pooled.row(g) = x.middleRows(static_cast<Eigen::Index>(g) * w, w).colwise().mean();
    } else {
        t.argmax.assign(static_cast<std::size_t>(groups * x.cols()), 0);
        for (int g = 0; g < groups; ++g) {
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
                Eigen::Index r = 0;
                pooled(g, c) = x.col(c).segment(static_cast<Eigen::Index>(g) * w, w).maxCoeff(&r);
                t.argmax[static_cast<std::size_t>(g * x.cols() + c)] = r;
            }
        }
    }
    t.last = std::move(x);
    return pooled;
}

Mat TemporalNet::backward(const TemporalTrace& t, int steps, const TemporalParams& p, const Mat& d_pooled,
                          TemporalParams& grad) const
{
    const Eigen::Index groups = d_pooled.rows();
    Mat dx = Mat::Zero(t.last.rows(), t.last.cols());
    if (pool_ == PoolMode::Mean) {
        for (Eigen::Index g = 0; g < groups; ++g) {
            dx.middleRows(g * steps, steps).rowwise() += d_pooled.row(g) / static_cast<double>(steps);
        }
    } else {
        for (Eigen::Index g = 0; g < groups; ++g) {
            for (Eigen::Index c = 0; c < dx.cols(); ++c) {
                dx(g * steps + t.argmax[static_cast<std::size_t>(g * dx.cols() + c)], c) += d_pooled(g, c);
            }
        }
    }
    if (!enabled_) return dx;

    for (std::size_t l = p.kernels.size(); l-- > 0;) {
        Mat dpre = dx;
        relu_backward_inplace(dpre, t.pre[l]);
        const Mat& act = t.activations[l];
        const int groups = static_cast<int>(act.rows() / steps);
        const int chunk = chunk_groups(steps, p.width, act.cols());
        Mat dact = Mat::Zero(act.rows(), act.cols());
        Mat col, dcol;
        for (int g0 = 0; g0 < groups; g0 += chunk) {
            const int count = std::min(chunk, groups - g0);
            const auto rows = dpre.middleRows(static_cast<Eigen::Index>(g0) * steps, static_cast<Eigen::Index>(count) * steps);
            im2col(act, steps, p.width, g0, count, col);
            grad.kernels[l].noalias() += col.transpose() * rows;
            dcol.noalias() = rows * p.kernels[l].transpose();
            col2im_add(dcol, steps, p.width, g0, count, dact);
        }
        relu_backward_inplace(dact, t.inputs[l]);
        dx = std::move(dact);
    }
    return dx;
}

Mat temporal_forward(const LayerFeatures& feat, const TemporalParams& p, PoolMode pool)
{
    return TemporalNet(pool, true).forward(feat, p);
}

}  // namespace mstgat
