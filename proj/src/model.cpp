#include "mstgat/model.hpp"

#include <algorithm>

namespace mstgat {

ModelParams ModelParams::zeros_like() const
{
    ModelParams z = *this;
    z.visit([](const std::string&, Mat& m) { m.setZero(); });
    return z;
}

std::vector<std::pair<std::string, Mat*>> ModelParams::list()
{
    std::vector<std::pair<std::string, Mat*>> out;
    visit([&](const std::string& name, Mat& m) { out.emplace_back(name, &m); });
    return out;
}

std::vector<std::pair<std::string, const Mat*>> ModelParams::list() const
{
    std::vector<std::pair<std::string, const Mat*>> out;
    const_cast<ModelParams*>(this)->visit([&](const std::string& name, Mat& m) { out.emplace_back(name, &m); });
    return out;
}

std::size_t ModelParams::count() const
{
    std::size_t total = 0;
    for (const auto& [name, m] : list()) total += static_cast<std::size_t>(m->size());
    return total;
}

int effective_topk(const Config& cfg, int nodes)
{
    return cfg.ablation.disable_topk ? nodes : std::min(cfg.topk, nodes);
}

MgatOptions mgat_options(const Config& cfg)
{
    MgatOptions opt;
    opt.heads = cfg.heads;
    opt.modal = !cfg.ablation.disable_modal;
    opt.uniform_attention = cfg.ablation.disable_attention;
    return opt;
}

int temporal_input_channels(const Config& cfg)
{
    return cfg.gat_layers > 0 ? cfg.gat_channels : cfg.lift_channels;
}

int head_feature_channels(const Config& cfg)
{
    const bool conv = !cfg.ablation.disable_temporal && cfg.conv_layers > 0;
    return conv ? cfg.conv_channels : temporal_input_channels(cfg);
}

ModelState init_model(const Config& cfg, const std::vector<std::string>& names, const std::vector<int>& modality,
                      const NormStats& norm)
{
    cfg.validate();
    const int n = static_cast<int>(names.size());
    Rng rng(derive_seed(cfg.seed, "init"));

    ModelState s;
    s.config = cfg;
    s.names = names;
    s.modality = modality;
    s.norm = norm;
    s.params.embeddings = init_embeddings(n, cfg.embed_dim, rng);

    MgatShape shape;
    shape.nodes = n;
    shape.window = cfg.window;
    shape.embed_dim = cfg.embed_dim;
    shape.lift_channels = cfg.lift_channels;
    shape.channels = cfg.gat_channels;
    shape.relation_hidden = cfg.relation_hidden;
    shape.layers = cfg.gat_layers;
    s.params.mgat = init_mgat_params(shape, mgat_options(cfg), rng);

    const int conv_layers = cfg.ablation.disable_temporal ? 0 : cfg.conv_layers;
    s.params.temporal =
        init_temporal_params(cfg.conv_kernel, cfg.window, conv_layers, temporal_input_channels(cfg), cfg.conv_channels, rng);

    const int c = head_feature_channels(cfg);
    s.params.vae = init_vae_params(n * c, cfg.vae_hidden, cfg.latent_dim, n, rng);
    s.params.predictor = init_predictor_params(c, cfg.embed_dim, cfg.predictor_hidden, rng);
    s.topology = rebuild_topology(s);
    return s;
}

GraphTopology rebuild_topology(const ModelState& state)
{
    return build_topology(state.params.embeddings, state.modality, effective_topk(state.config, state.nodes()));
}

double joint_loss(double l_rec, double l_pred, double gamma1)
{
    return gamma1 * l_rec + (1.0 - gamma1) * l_pred;
}

WindowStack stack_windows(const std::vector<WindowBatch>& all, const std::vector<std::size_t>& indices)
{
    WindowStack s;
    if (indices.empty()) return s;
    const Eigen::Index n = all[indices.front()].window.rows();
    const Eigen::Index w = all[indices.front()].window.cols();
    s.batch = static_cast<int>(indices.size());
    s.windows.resize(s.batch * n, w);
    s.next = Mat::Zero(s.batch, n);
    for (int b = 0; b < s.batch; ++b) {
        const WindowBatch& wb = all[indices[static_cast<std::size_t>(b)]];
        s.windows.middleRows(b * n, n) = wb.window;
        s.has_next.push_back(wb.next_value.has_value());
        if (wb.next_value) s.next.row(b) = wb.next_value->transpose();
        s.t_end.push_back(wb.t_end);
    }
    return s;
}

WindowStack stack_windows(const std::vector<WindowBatch>& all, std::size_t begin, std::size_t end)
{
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
    return stack_windows(all, idx);
}

namespace {

Mat last_column_targets(const WindowStack& batch)
{
    const Eigen::Index n = batch.windows.rows() / batch.batch;
    const Vec last = batch.windows.col(batch.windows.cols() - 1);
    return Eigen::Map<const Mat>(last.data(), batch.batch, n);
}

}  // namespace

Network::Network(const Config& cfg)
    : mgat_(mgat_options(cfg)),
      temporal_(cfg.pool, !cfg.ablation.disable_temporal && cfg.conv_layers > 0),
      vae_(cfg.logvar_min, cfg.logvar_max)
{
}

Mat Network::head_features(const ModelParams& p, const GraphTopology& topo, const WindowStack& batch) const
{
    const LayerFeatures feat = mgat_.forward(batch.windows, batch.batch, p.embeddings, topo, p.mgat);
    return temporal_.forward(feat, p.temporal);
}

BatchLosses Network::forward_backward(const ModelParams& p, const GraphTopology& topo, const WindowStack& batch,
                                      const std::vector<Mat>& eps, double kl_weight, double gamma1,
                                      ModelParams& grad) const
{
    MgatTrace mt;
    const LayerFeatures feat = mgat_.forward(batch.windows, batch.batch, p.embeddings, topo, p.mgat, &mt);
    TemporalTrace tt;
    const Mat x = temporal_.forward(feat, p.temporal, &tt);

    VaeTrace vt;
    const Mat target = last_column_targets(batch);
    const VaeOutput vo = vae_.forward(x, batch.batch, target, p.vae, eps, &vt);
    PredictorTrace pt;
    const Mat forecast = predictor_.forward(x, p.embeddings, p.predictor, &pt);

    BatchLosses l;
    l.l_rec = reconstruction_loss(vo.terms, kl_weight);
    Mat d_forecast;
    l.l_pred = prediction_loss(forecast, batch.next, batch.has_next, &d_forecast);
    l.l_joint = joint_loss(l.l_rec, l.l_pred, gamma1);

    const double inv_b = 1.0 / static_cast<double>(batch.batch);
    Mat d_x = vae_.backward(vt, p.vae, gamma1 * inv_b, gamma1 * kl_weight * inv_b, grad.vae);
    d_forecast *= (1.0 - gamma1);
    d_x += predictor_.backward(pt, p.predictor, d_forecast, feat.nodes, grad.predictor, grad.embeddings);

    LayerFeatures d_feat;
    d_feat.batch = feat.batch;
    d_feat.nodes = feat.nodes;
    d_feat.steps = feat.steps;
    d_feat.timewise = temporal_.backward(tt, feat.steps, p.temporal, d_x, grad.temporal);
    mgat_.backward(mt, p.embeddings, p.mgat, d_feat, grad.mgat, grad.embeddings);
    return l;
}

BatchLosses Network::loss(const ModelParams& p, const GraphTopology& topo, const WindowStack& batch,
                          const std::vector<Mat>& eps, double kl_weight, double gamma1) const
{
    const Mat x = head_features(p, topo, batch);
    const VaeOutput vo = vae_.forward(x, batch.batch, last_column_targets(batch), p.vae, eps);
    const Mat forecast = predictor_.forward(x, p.embeddings, p.predictor);
    BatchLosses l;
    l.l_rec = reconstruction_loss(vo.terms, kl_weight);
    l.l_pred = prediction_loss(forecast, batch.next, batch.has_next);
    l.l_joint = joint_loss(l.l_rec, l.l_pred, gamma1);
    return l;
}

InferenceOutput Network::infer(const ModelParams& p, const GraphTopology& topo, const WindowStack& batch,
                               const std::vector<Mat>& eps) const
{
    const Mat x = head_features(p, topo, batch);
    InferenceOutput out;
    out.p = vae_.forward(x, batch.batch, last_column_targets(batch), p.vae, eps).p;
    out.forecast = predictor_.forward(x, p.embeddings, p.predictor);
    return out;
}

}  // namespace mstgat
