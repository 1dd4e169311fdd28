#include "mstgat/mgat.hpp"

#include <algorithm>
#include <cmath>

namespace mstgat {

namespace {

Mat glorot(int rows, int cols, Rng& rng)
{
    Mat m(rows, cols);
    glorot_uniform(m, rng);
    return m;
}

RelationParams init_relation(int embed_dim, int hidden, int in_channels, int channels, Rng& rng)
{
    RelationParams r;
    r.w1 = glorot(2 * embed_dim, hidden, rng);
    r.b1 = Mat::Zero(1, hidden);
    r.w2 = glorot(hidden, 1, rng);
    r.value = glorot(in_channels, channels, rng);
    return r;
}

using Neighbours = std::vector<std::vector<int>>;

// out = summary * w, computing the shared tail once per batch.
void project_summary(const LayerFeatures& in, const Mat& w, Mat& out)
{
    const Eigen::Index shared = in.shared_tail;
    const Eigen::Index own = in.summary.cols() - shared;
    out.noalias() = in.summary.leftCols(own) * w.topRows(own);
    if (shared == 0) return;
    const Mat tail = in.summary.block(0, own, in.nodes, shared) * w.bottomRows(shared);
    for (int b = 0; b < in.batch; ++b) out.middleRows(static_cast<Eigen::Index>(b) * in.nodes, in.nodes) += tail;
}

// Adjoint of project_summary. The shared-tail gradient is summed over the
// batch and stored on the first window's rows.
void project_summary_back(const LayerFeatures& in, const Mat& w, const Mat& d_out, Mat& g_w, Mat& d_summary)
{
    const Eigen::Index shared = in.shared_tail;
    const Eigen::Index own = in.summary.cols() - shared;
    g_w.topRows(own).noalias() += in.summary.leftCols(own).transpose() * d_out;
    d_summary.leftCols(own).noalias() += d_out * w.topRows(own).transpose();
    if (shared == 0) return;
    Mat sum = Mat::Zero(in.nodes, d_out.cols());
    for (int b = 0; b < in.batch; ++b) sum += d_out.middleRows(static_cast<Eigen::Index>(b) * in.nodes, in.nodes);
    g_w.bottomRows(shared).noalias() += in.summary.block(0, own, in.nodes, shared).transpose() * sum;
    d_summary.block(0, own, in.nodes, shared).noalias() += sum * w.bottomRows(shared).transpose();
}

// Expands per-head weights into one row that scales each head's channel block.
void head_weights(const std::vector<double>& per_head, int ch, RowVec& row)
{
    for (std::size_t s = 0; s < per_head.size(); ++s) row.segment(static_cast<Eigen::Index>(s) * ch, ch).setConstant(per_head[s]);
}

// Multi-head scaled dot-product attention restricted to the TopK graph.
void multi_head_core(const LayerFeatures& in, const Neighbours& nbrs, const MgatLayerParams& p, const MgatOptions& opt,
                     Mat& q, Mat& k, Mat& v, std::vector<Mat>& alpha, Mat& out)
{
    const int n = in.nodes;
    const int w = in.steps;
    const int heads = opt.heads;
    const int dk = in.summary_width() / heads;
    const int ch = static_cast<int>(p.value.cols()) / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

    if (!opt.uniform_attention) {
        project_summary(in, p.query, q);
        project_summary(in, p.key, k);
    }
    v.noalias() = in.timewise * p.value;
    out = Mat::Zero(v.rows(), v.cols());
    alpha.assign(static_cast<std::size_t>(in.batch * heads), Mat::Zero(n, n));

    std::vector<double> score;
    std::vector<double> per_head(static_cast<std::size_t>(heads));
    RowVec weights(v.cols());
    for (int b = 0; b < in.batch; ++b) {
        for (int i = 0; i < n; ++i) {
            const auto& nb = nbrs[static_cast<std::size_t>(i)];
            const auto m = nb.size();
            score.assign(m * static_cast<std::size_t>(heads), 1.0 / static_cast<double>(m));
            for (int s = 0; s < heads && !opt.uniform_attention; ++s) {
                double* e = score.data() + static_cast<std::size_t>(s) * m;
                const auto qi = q.row(b * n + i).segment(s * dk, dk);
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t t = 0; t < m; ++t) {
                    e[t] = qi.dot(k.row(b * n + nb[t]).segment(s * dk, dk)) * inv_sqrt;
                    mx = std::max(mx, e[t]);
                }
                double z = 0.0;
                for (std::size_t t = 0; t < m; ++t) z += (e[t] = std::exp(e[t] - mx));
                for (std::size_t t = 0; t < m; ++t) e[t] /= z;
            }
            auto dst = out.middleRows(static_cast<Eigen::Index>(b * n + i) * w, w);
            for (std::size_t t = 0; t < m; ++t) {
                for (int s = 0; s < heads; ++s) {
                    const double a = score[static_cast<std::size_t>(s) * m + t];
                    per_head[static_cast<std::size_t>(s)] = a;
                    alpha[static_cast<std::size_t>(b * heads + s)](i, nb[t]) = a;
                }
                head_weights(per_head, ch, weights);
                dst.array() += v.middleRows(static_cast<Eigen::Index>(b * n + nb[t]) * w, w).array().rowwise() *
                               weights.array();
            }
        }
    }
}

void multi_head_back(const LayerFeatures& in, const Neighbours& nbrs, const MgatLayerParams& p, const MgatOptions& opt,
                     const Mat& q, const Mat& k, const Mat& v, const std::vector<Mat>& alpha, const Mat& d_out,
                     MgatLayerParams& g, Mat& d_summary, Mat& d_timewise)
{
    const int n = in.nodes;
    const int w = in.steps;
    const int heads = opt.heads;
    const int dk = in.summary_width() / heads;
    const int ch = static_cast<int>(p.value.cols()) / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

    Mat dv = Mat::Zero(v.rows(), v.cols());
    Mat dq;
    Mat dk_mat;
    if (!opt.uniform_attention) {
        dq = Mat::Zero(q.rows(), q.cols());
        dk_mat = Mat::Zero(k.rows(), k.cols());
    }
    std::vector<double> da;
    std::vector<double> per_head(static_cast<std::size_t>(heads));
    RowVec weights(v.cols());
    for (int b = 0; b < in.batch; ++b) {
        for (int i = 0; i < n; ++i) {
            const auto& nb = nbrs[static_cast<std::size_t>(i)];
            const auto m = nb.size();
            const auto gi = d_out.middleRows(static_cast<Eigen::Index>(b * n + i) * w, w);
            da.assign(m * static_cast<std::size_t>(heads), 0.0);
            for (std::size_t t = 0; t < m; ++t) {
                const int j = nb[t];
                for (int s = 0; s < heads; ++s) {
                    per_head[static_cast<std::size_t>(s)] = alpha[static_cast<std::size_t>(b * heads + s)](i, j);
                }
                head_weights(per_head, ch, weights);
                const auto vj = v.middleRows(static_cast<Eigen::Index>(b * n + j) * w, w);
                dv.middleRows(static_cast<Eigen::Index>(b * n + j) * w, w).array() += gi.array().rowwise() * weights.array();
                if (opt.uniform_attention) continue;
                const RowVec prod = gi.cwiseProduct(vj).colwise().sum();
                for (int s = 0; s < heads; ++s) da[static_cast<std::size_t>(s) * m + t] = prod.segment(s * ch, ch).sum();
            }
            if (opt.uniform_attention) continue;
            for (int s = 0; s < heads; ++s) {
                const Mat& a = alpha[static_cast<std::size_t>(b * heads + s)];
                const double* das = da.data() + static_cast<std::size_t>(s) * m;
                double weighted = 0.0;
                for (std::size_t t = 0; t < m; ++t) weighted += a(i, nb[t]) * das[t];
                auto dqi = dq.row(b * n + i).segment(s * dk, dk);
                const auto qi = q.row(b * n + i).segment(s * dk, dk);
                for (std::size_t t = 0; t < m; ++t) {
                    const int j = nb[t];
                    const double de = a(i, j) * (das[t] - weighted) * inv_sqrt;
                    dqi += de * k.row(b * n + j).segment(s * dk, dk);
                    dk_mat.row(b * n + j).segment(s * dk, dk) += de * qi;
                }
            }
        }
    }
    g.value.noalias() += in.timewise.transpose() * dv;
    d_timewise.noalias() += dv * p.value.transpose();
    if (!opt.uniform_attention) {
        project_summary_back(in, p.query, dq, g.query, d_summary);
        project_summary_back(in, p.key, dk_mat, g.key, d_summary);
    }
}

void relation_core(const LayerFeatures& in, const Mat& emb, const AdjMat& adj, const RelationParams& p,
                   MgatTrace::Layer::Rel& c, Mat& out)
{
    const int n = in.nodes;
    const int w = in.steps;
    const int d = static_cast<int>(emb.cols());
    c.nbrs = neighbour_lists(adj);
    const Mat left = emb * p.w1.topRows(d);
    const Mat right = emb * p.w1.bottomRows(d);
    c.pre.assign(static_cast<std::size_t>(n), {});
    c.g.assign(static_cast<std::size_t>(n), {});
    c.beta = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const auto& nb = c.nbrs[static_cast<std::size_t>(i)];
        if (nb.empty()) continue;
        auto& pre = c.pre[static_cast<std::size_t>(i)];
        auto& g = c.g[static_cast<std::size_t>(i)];
        double mx = -std::numeric_limits<double>::infinity();
        for (int j : nb) {
            RowVec h = left.row(i) + right.row(j) + p.b1;
            const double gij = sigmoid(h.cwiseMax(0.0).dot(p.w2.col(0).transpose()));
            pre.push_back(std::move(h));
            g.push_back(gij);
            mx = std::max(mx, gij);
        }
        double z = 0.0;
        for (std::size_t t = 0; t < nb.size(); ++t) z += std::exp(g[t] - mx);
        for (std::size_t t = 0; t < nb.size(); ++t) c.beta(i, nb[t]) = std::exp(g[t] - mx) / z;
    }

    c.v.noalias() = in.timewise * p.value;
    out = Mat::Zero(c.v.rows(), c.v.cols());
    for (int b = 0; b < in.batch; ++b) {
        for (int i = 0; i < n; ++i) {
            auto dst = out.middleRows((b * n + i) * w, w);
            for (int j : c.nbrs[static_cast<std::size_t>(i)]) dst += c.beta(i, j) * c.v.middleRows((b * n + j) * w, w);
        }
    }
}

void relation_back(const LayerFeatures& in, const Mat& emb, const RelationParams& p, const MgatTrace::Layer::Rel& c,
                   const Mat& d_out, RelationParams& g, Mat& d_emb, Mat& d_timewise)
{
    const int n = in.nodes;
    const int w = in.steps;
    const int d = static_cast<int>(emb.cols());
    Mat dv = Mat::Zero(c.v.rows(), c.v.cols());
    Mat dbeta = Mat::Zero(n, n);
    for (int b = 0; b < in.batch; ++b) {
        for (int i = 0; i < n; ++i) {
            const auto gi = d_out.middleRows((b * n + i) * w, w);
            for (int j : c.nbrs[static_cast<std::size_t>(i)]) {
                dv.middleRows((b * n + j) * w, w) += c.beta(i, j) * gi;
                dbeta(i, j) += gi.cwiseProduct(c.v.middleRows((b * n + j) * w, w)).sum();
            }
        }
    }
    g.value.noalias() += in.timewise.transpose() * dv;
    d_timewise.noalias() += dv * p.value.transpose();

    Mat d_left = Mat::Zero(n, p.w1.cols());
    Mat d_right = Mat::Zero(n, p.w1.cols());
    for (int i = 0; i < n; ++i) {
        const auto& nb = c.nbrs[static_cast<std::size_t>(i)];
        if (nb.empty()) continue;
        double weighted = 0.0;
        for (int j : nb) weighted += c.beta(i, j) * dbeta(i, j);
        for (std::size_t t = 0; t < nb.size(); ++t) {
            const int j = nb[t];
            const double gij = c.g[static_cast<std::size_t>(i)][t];
            const double dz = c.beta(i, j) * (dbeta(i, j) - weighted) * gij * (1.0 - gij);
            const RowVec& pre = c.pre[static_cast<std::size_t>(i)][t];
            g.w2.col(0) += dz * pre.cwiseMax(0.0).transpose();
            RowVec dh = dz * p.w2.col(0).transpose();
            dh = (pre.array() > 0.0).select(dh, 0.0);
            d_left.row(i) += dh;
            d_right.row(j) += dh;
            g.b1 += dh;
        }
    }
    g.w1.topRows(d).noalias() += emb.transpose() * d_left;
    g.w1.bottomRows(d).noalias() += emb.transpose() * d_right;
    d_emb.noalias() += d_left * p.w1.topRows(d).transpose();
    d_emb.noalias() += d_right * p.w1.bottomRows(d).transpose();
}

Mat time_mean(const Mat& rows, int groups, int steps)
{
    Mat out(groups, rows.cols());
    for (int r = 0; r < groups; ++r) out.row(r) = rows.middleRows(r * steps, steps).colwise().mean();
    return out;
}

Mat concat_columns(const Mat& a, const Mat& b, const Mat& c)
{
    Mat o(a.rows(), a.cols() + b.cols() + c.cols());
    o.leftCols(a.cols()) = a;
    if (b.cols()) o.middleCols(a.cols(), b.cols()) = b;
    if (c.cols()) o.rightCols(c.cols()) = c;
    return o;
}

LayerFeatures fuse_core(const LayerFeatures& shape_of, const Mat& o, const MgatLayerParams& p, Mat& pre_t,
                        Mat& o_mean, Mat& pre_s)
{
    LayerFeatures next;
    next.batch = shape_of.batch;
    next.nodes = shape_of.nodes;
    next.steps = shape_of.steps;
    pre_t.noalias() = o * p.w_out;
    pre_t.rowwise() += p.b_out.row(0);
    next.timewise = relu(pre_t);
    o_mean = time_mean(o, next.batch * next.nodes, next.steps);
    pre_s.noalias() = o_mean * p.w_out;
    pre_s.rowwise() += p.b_out.row(0);
    next.summary = relu(pre_s);
    return next;
}

}  // namespace

MgatParams init_mgat_params(const MgatShape& shape, const MgatOptions& opt, Rng& rng)
{
    MgatParams p;
    p.input.w_in = glorot(shape.window, shape.embed_dim, rng);
    p.input.lift_w = glorot(1, shape.lift_channels, rng);
    p.input.lift_b = Mat::Zero(1, shape.lift_channels);

    int summary = 2 * shape.embed_dim;
    int in_channels = shape.lift_channels;
    for (int l = 0; l < shape.layers; ++l) {
        MgatLayerParams layer;
        layer.query = glorot(summary, summary, rng);
        layer.key = glorot(summary, summary, rng);
        layer.value = glorot(in_channels, shape.channels, rng);
        int fused = shape.channels;
        if (opt.modal) {
            layer.intra = init_relation(shape.embed_dim, shape.relation_hidden, in_channels, shape.channels, rng);
            layer.inter = init_relation(shape.embed_dim, shape.relation_hidden, in_channels, shape.channels, rng);
            fused = 3 * shape.channels;
        }
        layer.w_out = glorot(fused, shape.channels, rng);
        layer.b_out = Mat::Zero(1, shape.channels);
        p.layers.push_back(std::move(layer));
        summary = shape.channels;
        in_channels = shape.channels;
    }
    return p;
}

LayerFeatures initial_features(const Mat& windows, int batch, const Mat& embeddings, const InputParams& p)
{
    const int n = static_cast<int>(embeddings.rows());
    const int d = static_cast<int>(embeddings.cols());
    const int w = static_cast<int>(windows.cols());
    if (windows.rows() != static_cast<Eigen::Index>(batch) * n) {
        throw DataError("initial_features: window rows do not match batch * nodes");
    }
    if (p.w_in.rows() != w || p.w_in.cols() != d) {
        throw DataError("initial_features: W_in must be " + std::to_string(w) + " x " + std::to_string(d));
    }
    LayerFeatures f;
    f.batch = batch;
    f.nodes = n;
    f.steps = w;
    f.summary.resize(static_cast<Eigen::Index>(batch) * n, 2 * d);
    f.summary.leftCols(d).noalias() = windows * p.w_in;
    for (int b = 0; b < batch; ++b) f.summary.block(b * n, d, n, d) = embeddings;
    f.shared_tail = d;
    const Eigen::Map<const Vec> flat(windows.data(), windows.size());
    f.timewise.noalias() = flat * p.lift_w;
    f.timewise.rowwise() += p.lift_b.row(0);
    return f;
}

MultiHeadOutput multi_head_attention(const LayerFeatures& feat, const AdjMat& adj, const MgatLayerParams& p,
                                     const MgatOptions& opt)
{
    MultiHeadOutput r;
    Mat q, k, v;
    multi_head_core(feat, neighbour_lists(adj), p, opt, q, k, v, r.alpha, r.out);
    return r;
}

RelationalOutput relational_attention(const LayerFeatures& feat, const Mat& embeddings, const AdjMat& adj,
                                      const RelationParams& p)
{
    RelationalOutput r;
    MgatTrace::Layer::Rel cache;
    relation_core(feat, embeddings, adj, p, cache, r.out);
    r.beta = std::move(cache.beta);
    return r;
}

LayerFeatures fuse(const LayerFeatures& shape_of, const Mat& att, const Mat& intra, const Mat& inter,
                   const MgatLayerParams& p)
{
    if (intra.rows() && intra.rows() != att.rows()) throw DataError("fuse: branch row counts differ");
    if (inter.rows() && inter.rows() != att.rows()) throw DataError("fuse: branch row counts differ");
    const Mat o = concat_columns(att, intra, inter);
    if (o.cols() != p.w_out.rows()) throw DataError("fuse: concatenated width does not match W_out");
    Mat pre_t, o_mean, pre_s;
    return fuse_core(shape_of, o, p, pre_t, o_mean, pre_s);
}

LayerFeatures Mgat::forward(const Mat& windows, int batch, const Mat& embeddings, const GraphTopology& topo,
                            const MgatParams& p, MgatTrace* trace) const
{
    LayerFeatures feat = initial_features(windows, batch, embeddings, p.input);
    MgatTrace local;
    MgatTrace& t = trace ? *trace : local;
    t.windows = windows;
    t.topk_nbrs = neighbour_lists(topo.topk);
    t.layers.assign(p.layers.size(), {});

    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto& lp = p.layers[l];
        auto& c = t.layers[l];
        Mat att;
        multi_head_core(feat, t.topk_nbrs, lp, opt_, c.q, c.k, c.v, c.alpha, att);
        Mat intra, inter;
        if (opt_.modal) {
            relation_core(feat, embeddings, topo.intra, lp.intra, c.intra, intra);
            relation_core(feat, embeddings, topo.inter, lp.inter, c.inter, inter);
        }
        c.o = concat_columns(att, intra, inter);
        LayerFeatures next = fuse_core(feat, c.o, lp, c.pre_t, c.o_mean, c.pre_s);
        c.input = std::move(feat);
        feat = std::move(next);
    }
    return feat;
}

void Mgat::backward(const MgatTrace& trace, const Mat& embeddings, const MgatParams& p, const LayerFeatures& d_out,
                    MgatParams& grad, Mat& d_embeddings) const
{
    Mat d_summary = d_out.summary;
    Mat d_timewise = d_out.timewise;

    for (std::size_t li = p.layers.size(); li-- > 0;) {
        const auto& lp = p.layers[li];
        auto& lg = grad.layers[li];
        const auto& c = trace.layers[li];
        const LayerFeatures& in = c.input;
        const int w = in.steps;

        // fuse
        Mat d_pre_t = d_timewise;
        relu_backward_inplace(d_pre_t, c.pre_t);
        Mat d_pre_s = d_summary.rows() ? d_summary : Mat::Zero(c.pre_s.rows(), c.pre_s.cols());
        relu_backward_inplace(d_pre_s, c.pre_s);
        lg.w_out.noalias() += c.o.transpose() * d_pre_t;
        lg.w_out.noalias() += c.o_mean.transpose() * d_pre_s;
        lg.b_out += d_pre_t.colwise().sum();
        lg.b_out += d_pre_s.colwise().sum();
        Mat d_o = d_pre_t * lp.w_out.transpose();
        const Mat d_o_mean = d_pre_s * lp.w_out.transpose() / static_cast<double>(w);
        for (Eigen::Index r = 0; r < d_o_mean.rows(); ++r) d_o.middleRows(r * w, w).rowwise() += d_o_mean.row(r);

        Mat d_in_summary = Mat::Zero(in.summary.rows(), in.summary.cols());
        Mat d_in_timewise = Mat::Zero(in.timewise.rows(), in.timewise.cols());
        const Eigen::Index ch = lp.value.cols();
        multi_head_back(in, trace.topk_nbrs, lp, opt_, c.q, c.k, c.v, c.alpha, d_o.leftCols(ch), lg, d_in_summary,
                        d_in_timewise);
        if (opt_.modal) {
            const Eigen::Index rc = lp.intra.value.cols();
            relation_back(in, embeddings, lp.intra, c.intra, d_o.middleCols(ch, rc), lg.intra, d_embeddings,
                          d_in_timewise);
            relation_back(in, embeddings, lp.inter, c.inter, d_o.middleCols(ch + rc, rc), lg.inter, d_embeddings,
                          d_in_timewise);
        }
        d_summary = std::move(d_in_summary);
        d_timewise = std::move(d_in_timewise);
    }

    // initial features
    const int n = static_cast<int>(embeddings.rows());
    const int d = static_cast<int>(embeddings.cols());
    const Mat& windows = trace.windows;
    const int batch = static_cast<int>(windows.rows()) / n;
    if (d_summary.rows()) {
        grad.input.w_in.noalias() += windows.transpose() * d_summary.leftCols(d);
        for (int b = 0; b < batch; ++b) d_embeddings += d_summary.block(b * n, d, n, d);
    }
    const Eigen::Map<const Vec> flat(windows.data(), windows.size());
    grad.input.lift_w.noalias() += flat.transpose() * d_timewise;
    grad.input.lift_b += d_timewise.colwise().sum();
}

LayerFeatures mgat_forward(const Mat& window, const Mat& embeddings, const GraphTopology& topo, const MgatParams& p,
                           const MgatOptions& opt)
{
    return Mgat(opt).forward(window, 1, embeddings, topo, p);
}

}  // namespace mstgat
