#include "mstgat/graph.hpp"
#include "mstgat/model.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <numeric>

using namespace mstgat;

namespace {

Mat rows(std::initializer_list<std::initializer_list<double>> r)
{
    Mat m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& row : r) {
        Eigen::Index j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

// Brute-force ranking: sort candidates by (similarity desc, index asc).
std::vector<int> oracle_topk(const Mat& v, int i, std::vector<int> cand, int k)
{
    auto cos = [&](int a, int b) { return v.row(a).dot(v.row(b)) / (v.row(a).norm() * v.row(b).norm()); };
    std::vector<std::pair<double, int>> scored;
    for (int j : cand) scored.emplace_back(i == j ? 1.0 : cos(i, j), j);
    std::sort(scored.begin(), scored.end(), [](auto x, auto y) { return x.first != y.first ? x.first > y.first : x.second < y.second; });
    std::vector<int> out;
    for (int t = 0; t < std::min<int>(k, static_cast<int>(scored.size())); ++t) out.push_back(scored[static_cast<std::size_t>(t)].second);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_CASE("cosine similarity examples")
{
    const Mat e = rows({{1, 0}, {2, 0}, {0, 3}, {1, 1}});
    const Mat s = cosine_similarity(e);
    CHECK(s(0, 1) == doctest::Approx(1.0));
    CHECK(s(0, 2) == doctest::Approx(0.0));
    CHECK(s(0, 3) == doctest::Approx(0.70711).epsilon(1e-5));
    for (int i = 0; i < 4; ++i) CHECK(s(i, i) == 1.0);
    CHECK(s.isApprox(s.transpose()));
    CHECK_THROWS_AS(cosine_similarity(rows({{1, 0}, {0, 0}})), NumericError);
}

TEST_CASE("top_k breaks ties toward the lower index")
{
    const double scores[] = {0.5, 0.9, 0.5, 0.5, 0.1};
    auto sel = top_k({0, 1, 2, 3, 4}, scores, 3);
    std::sort(sel.begin(), sel.end());
    CHECK(sel == std::vector<int>{0, 1, 2});
    CHECK(top_k({4, 3}, scores, 5).size() == 2);
    CHECK(top_k({}, scores, 2).empty());
}

TEST_CASE("adjacency matches a brute-force ranking")
{
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 3 + trial % 9;
        const int d = 2 + trial % 5;
        const int k = 1 + trial % n;
        const Mat e = init_embeddings(n, d, rng);
        const AdjMat a = build_adjacency(e, k);
        std::vector<int> all(static_cast<std::size_t>(n));
        std::iota(all.begin(), all.end(), 0);
        for (int i = 0; i < n; ++i) {
            CHECK(a.row(i).sum() == k);
            CHECK(a(i, i) == 1);
            CHECK(neighbour_lists(a)[static_cast<std::size_t>(i)] == oracle_topk(e, i, all, k));
        }
    }
}

TEST_CASE("modal adjacency on a worked example")
{
    // series 0,1,2 in modality 1 and 3,4 in modality 2
    const Mat e = rows({{1, 0}, {0.9, 0.1}, {0, 1}, {1, 0.05}, {-1, 0}});
    const std::vector<int> modality{1, 1, 1, 2, 2};
    const ModalAdjacency m = build_modal_adjacency(e, modality, 2);
    // intra for node 0: candidates {0, 1, 2} reduced to self and node 1
    CHECK(neighbour_lists(m.intra)[0] == std::vector<int>{0, 1});
    // intra for node 3: {3, 4} fits in K
    CHECK(neighbour_lists(m.intra)[3] == std::vector<int>{3, 4});
    // inter for node 0: {3, 4}
    CHECK(neighbour_lists(m.inter)[0] == std::vector<int>{3, 4});
    CHECK(neighbour_lists(m.inter)[4] == oracle_topk(e, 4, {0, 1, 2}, 2));
    for (int i = 0; i < 5; ++i) {
        CHECK(m.intra(i, i) == 1);
        CHECK(m.inter(i, i) == 0);
        for (int j = 0; j < 5; ++j) {
            if (m.intra(i, j)) CHECK(modality[static_cast<std::size_t>(i)] == modality[static_cast<std::size_t>(j)]);
            if (m.inter(i, j)) CHECK(modality[static_cast<std::size_t>(i)] != modality[static_cast<std::size_t>(j)]);
        }
    }
}

TEST_CASE("single-modality data has an empty inter relation")
{
    Rng rng(2);
    const Mat e = init_embeddings(5, 3, rng);
    const GraphTopology t = build_topology(e, {1, 1, 1, 1, 1}, 2);
    CHECK(t.inter.sum() == 0);
    for (int i = 0; i < 5; ++i) {
        CHECK(t.intra.row(i).sum() == 2);
        CHECK(t.intra(i, i) == 1);
    }
}

TEST_CASE("rebuild_topology follows the embeddings")
{
    Config cfg = mstgat::testing::tiny_config();
    const auto ds = mstgat::testing::random_dataset(6, 20, 2, 1);
    ModelState state = init_model(cfg, ds.names, ds.modality, NormStats{});
    CHECK(rebuild_topology(state) == state.topology);
    state.params.embeddings = -state.params.embeddings;
    // cosine is invariant under a global sign flip
    CHECK(rebuild_topology(state) == state.topology);
    Rng rng(3);
    state.params.embeddings = init_embeddings(6, cfg.embed_dim, rng);
    const GraphTopology t = rebuild_topology(state);
    CHECK(t == build_topology(state.params.embeddings, state.modality, effective_topk(cfg, 6)));
}
