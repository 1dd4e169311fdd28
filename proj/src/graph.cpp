#include "mstgat/graph.hpp"

#include <algorithm>
#include <numeric>

namespace mstgat {

Mat init_embeddings(int n, int d, Rng& rng)
{
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    Mat v(n, d);
    uniform_fill(v, -bound, bound, rng);
    for (int i = 0; i < n; ++i) {
        while (v.row(i).squaredNorm() == 0.0) {
            Mat row(1, d);
            uniform_fill(row, -bound, bound, rng);
            v.row(i) = row;
        }
    }
    return v;
}

Mat cosine_similarity(const Mat& embeddings)
{
    const Eigen::Index n = embeddings.rows();
    Vec norms = embeddings.rowwise().norm();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(norms(i) > 0.0)) throw NumericError("cosine_similarity: embedding row " + std::to_string(i) + " is zero");
    }
    Mat unit = norms.cwiseInverse().asDiagonal() * embeddings;
    Mat sim = unit * unit.transpose();
    sim = sim.cwiseMax(-1.0).cwiseMin(1.0);
    sim.diagonal().setOnes();
    return sim;
}

std::vector<int> top_k(const std::vector<int>& candidates, const double* scores, int k)
{
    std::vector<int> order = candidates;
    const auto keep = static_cast<std::size_t>(std::min<int>(k, static_cast<int>(order.size())));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](int a, int b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return a < b;
                      });
    order.resize(keep);
    std::sort(order.begin(), order.end());
    return order;
}

AdjMat build_adjacency_from_similarity(const Mat& similarity, int k)
{
    const int n = static_cast<int>(similarity.rows());
    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    AdjMat adj = AdjMat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j : top_k(all, similarity.row(i).data(), k)) adj(i, j) = 1;
    }
    return adj;
}

AdjMat build_adjacency(const Mat& embeddings, int k)
{
    return build_adjacency_from_similarity(cosine_similarity(embeddings), k);
}

ModalAdjacency build_modal_adjacency_from_similarity(const Mat& similarity, const std::vector<int>& modality, int k)
{
    const int n = static_cast<int>(similarity.rows());
    if (static_cast<int>(modality.size()) != n) {
        throw DataError("build_modal_adjacency: modality list does not match embedding rows");
    }
    ModalAdjacency out{AdjMat::Zero(n, n), AdjMat::Zero(n, n)};
    for (int i = 0; i < n; ++i) {
        std::vector<int> same;
        std::vector<int> other;
        for (int j = 0; j < n; ++j) {
            (modality[j] == modality[i] ? same : other).push_back(j);
        }
        for (int j : top_k(same, similarity.row(i).data(), k)) out.intra(i, j) = 1;
        for (int j : top_k(other, similarity.row(i).data(), k)) out.inter(i, j) = 1;
    }
    return out;
}

ModalAdjacency build_modal_adjacency(const Mat& embeddings, const std::vector<int>& modality, int k)
{
    return build_modal_adjacency_from_similarity(cosine_similarity(embeddings), modality, k);
}

GraphTopology build_topology(const Mat& embeddings, const std::vector<int>& modality, int k)
{
    const Mat sim = cosine_similarity(embeddings);
    auto modal = build_modal_adjacency_from_similarity(sim, modality, k);
    GraphTopology topo;
    topo.k = k;
    topo.topk = build_adjacency_from_similarity(sim, k);
    topo.intra = std::move(modal.intra);
    topo.inter = std::move(modal.inter);
    return topo;
}

std::vector<std::vector<int>> neighbour_lists(const AdjMat& adj)
{
    std::vector<std::vector<int>> out(static_cast<std::size_t>(adj.rows()));
    for (Eigen::Index i = 0; i < adj.rows(); ++i) {
        for (Eigen::Index j = 0; j < adj.cols(); ++j) {
            if (adj(i, j)) out[static_cast<std::size_t>(i)].push_back(static_cast<int>(j));
        }
    }
    return out;
}

}  // namespace mstgat
