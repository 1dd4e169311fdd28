#include "mstgat/mgat.hpp"

#include "test_support.hpp"

#include <doctest.h>

using namespace mstgat;
using mstgat::testing::check_gradients;

namespace {

struct Fixture {
    int n = 6, w = 8, d = 4, batch = 2;
    MgatShape shape;
    MgatOptions opt;
    Mat emb, windows;
    GraphTopology topo;
    MgatParams params;

    explicit Fixture(int layers = 1, bool modal = true, std::uint64_t seed = 5)
    {
        Rng rng(seed);
        shape.nodes = n;
        shape.window = w;
        shape.embed_dim = d;
        shape.lift_channels = 4;
        shape.channels = 4;
        shape.relation_hidden = 6;
        shape.layers = layers;
        opt.heads = 2;
        opt.modal = modal;
        emb = init_embeddings(n, d, rng);
        windows.resize(batch * n, w);
        uniform_fill(windows, 0.0, 1.0, rng);
        topo = build_topology(emb, {1, 1, 1, 2, 2, 2}, 3);
        params = init_mgat_params(shape, opt, rng);
        for (auto& l : params.layers) uniform_fill(l.b_out, -0.1, 0.1, rng);
        uniform_fill(params.input.lift_b, -0.1, 0.1, rng);
    }
};

AdjMat adjacency(int n, std::initializer_list<std::pair<int, int>> edges)
{
    AdjMat a = AdjMat::Zero(n, n);
    for (auto [i, j] : edges) a(i, j) = 1;
    return a;
}

}  // namespace

TEST_CASE("layer feature shapes")
{
    Fixture f(2);
    const LayerFeatures in = initial_features(f.windows, f.batch, f.emb, f.params.input);
    CHECK(in.summary.rows() == f.batch * f.n);
    CHECK(in.summary.cols() == 2 * f.d);
    CHECK(in.timewise.rows() == f.batch * f.n * f.w);
    CHECK(in.timewise.cols() == 4);
    CHECK(in.summary.block(f.n, f.d, f.n, f.d) == f.emb);
    CHECK(in.timewise(3 * f.w + 5, 2) ==
          doctest::Approx(f.windows(3, 5) * f.params.input.lift_w(0, 2) + f.params.input.lift_b(0, 2)));

    const LayerFeatures out = Mgat(f.opt).forward(f.windows, f.batch, f.emb, f.topo, f.params);
    CHECK(out.summary.rows() == f.batch * f.n);
    CHECK(out.summary.cols() == 4);
    CHECK(out.timewise.rows() == f.batch * f.n * f.w);
    CHECK((out.timewise.array() >= 0.0).all());
    CHECK_THROWS_AS(initial_features(f.windows.topRows(5), 1, f.emb, f.params.input), DataError);
}

TEST_CASE("attention weights are distributions over the neighbourhood")
{
    Fixture f;
    const LayerFeatures in = initial_features(f.windows, f.batch, f.emb, f.params.input);
    const MultiHeadOutput r = multi_head_attention(in, f.topo.topk, f.params.layers[0], f.opt);
    REQUIRE(r.alpha.size() == static_cast<std::size_t>(f.batch * f.opt.heads));
    for (const Mat& a : r.alpha) {
        for (int i = 0; i < f.n; ++i) {
            CHECK(a.row(i).sum() == doctest::Approx(1.0));
            for (int j = 0; j < f.n; ++j) {
                if (!f.topo.topk(i, j)) CHECK(a(i, j) == 0.0);
                else CHECK(a(i, j) > 0.0);
            }
        }
    }
    const RelationalOutput intra = relational_attention(in, f.emb, f.topo.intra, f.params.layers[0].intra);
    for (int i = 0; i < f.n; ++i) {
        CHECK(intra.beta.row(i).sum() == doctest::Approx(1.0));
        for (int j = 0; j < f.n; ++j) {
            if (!f.topo.intra(i, j)) CHECK(intra.beta(i, j) == 0.0);
        }
    }
}

TEST_CASE("a single neighbour passes its values through unchanged")
{
    Fixture f;
    const LayerFeatures in = initial_features(f.windows, f.batch, f.emb, f.params.input);
    const auto& lp = f.params.layers[0];
    const AdjMat adj = adjacency(f.n, {{0, 4}, {1, 1}, {2, 0}, {3, 5}, {4, 2}, {5, 3}});
    const MultiHeadOutput r = multi_head_attention(in, adj, lp, f.opt);
    const Mat v = in.timewise * lp.value;
    for (int b = 0; b < f.batch; ++b) {
        CHECK(r.out.middleRows((b * f.n + 0) * f.w, f.w).isApprox(v.middleRows((b * f.n + 4) * f.w, f.w)));
        CHECK(r.out.middleRows((b * f.n + 3) * f.w, f.w).isApprox(v.middleRows((b * f.n + 5) * f.w, f.w)));
    }
    const RelationalOutput rel = relational_attention(in, f.emb, adj, lp.intra);
    CHECK(rel.beta(2, 0) == 1.0);
    const Mat rv = in.timewise * lp.intra.value;
    CHECK(rel.out.middleRows(2 * f.w, f.w).isApprox(rv.middleRows(0, f.w)));
}

TEST_CASE("uniform attention averages the neighbour values")
{
    Fixture f;
    MgatOptions opt = f.opt;
    opt.uniform_attention = true;
    const LayerFeatures in = initial_features(f.windows, f.batch, f.emb, f.params.input);
    const auto& lp = f.params.layers[0];
    const MultiHeadOutput r = multi_head_attention(in, f.topo.topk, lp, opt);
    const Mat v = in.timewise * lp.value;
    const auto nbrs = neighbour_lists(f.topo.topk);
    for (int i = 0; i < f.n; ++i) {
        Mat expect = Mat::Zero(f.w, v.cols());
        for (int j : nbrs[static_cast<std::size_t>(i)]) expect += v.middleRows((f.n + j) * f.w, f.w);
        expect /= static_cast<double>(nbrs[static_cast<std::size_t>(i)].size());
        CHECK(r.out.middleRows((f.n + i) * f.w, f.w).isApprox(expect));
        for (int j : nbrs[static_cast<std::size_t>(i)]) CHECK(r.alpha[0](i, j) == doctest::Approx(1.0 / 3.0));
    }
}

TEST_CASE("an empty relation contributes zeros")
{
    Fixture f;
    const LayerFeatures in = initial_features(f.windows, f.batch, f.emb, f.params.input);
    const AdjMat adj = adjacency(f.n, {{0, 1}, {0, 2}});
    const RelationalOutput rel = relational_attention(in, f.emb, adj, f.params.layers[0].inter);
    for (int b = 0; b < f.batch; ++b) CHECK(rel.out.middleRows((b * f.n + 1) * f.w, (f.n - 1) * f.w).isZero());
    CHECK(rel.beta.bottomRows(f.n - 1).isZero());
    CHECK_FALSE(rel.out.topRows(f.w).isZero());
}

TEST_CASE("relational weights on a three-node example")
{
    // node 0 aggregates from nodes 1 and 2
    Mat emb(3, 2);
    emb << 1.0, 0.0, 0.5, -0.5, -1.0, 2.0;
    RelationParams p;
    p.w1.resize(4, 2);
    p.w1 << 0.3, -0.2, 0.1, 0.4, -0.5, 0.6, 0.2, 0.1;
    p.b1.resize(1, 2);
    p.b1 << 0.05, -0.1;
    p.w2.resize(2, 1);
    p.w2 << 1.5, -0.7;
    p.value = Mat::Identity(1, 1);
    LayerFeatures in;
    in.batch = 1;
    in.nodes = 3;
    in.steps = 1;
    in.summary = Mat::Zero(3, 1);
    in.timewise = (Mat(3, 1) << 10.0, 20.0, 30.0).finished();
    const AdjMat adj = adjacency(3, {{0, 1}, {0, 2}});

    auto g = [&](int i, int j) {
        double h[2];
        for (int c = 0; c < 2; ++c) {
            h[c] = emb(i, 0) * p.w1(0, c) + emb(i, 1) * p.w1(1, c) + emb(j, 0) * p.w1(2, c) + emb(j, 1) * p.w1(3, c) +
                   p.b1(0, c);
            h[c] = std::max(0.0, h[c]);
        }
        return 1.0 / (1.0 + std::exp(-(h[0] * p.w2(0, 0) + h[1] * p.w2(1, 0))));
    };
    const double e1 = std::exp(g(0, 1));
    const double e2 = std::exp(g(0, 2));
    const RelationalOutput r = relational_attention(in, emb, adj, p);
    CHECK(r.beta(0, 1) == doctest::Approx(e1 / (e1 + e2)));
    CHECK(r.beta(0, 2) == doctest::Approx(e2 / (e1 + e2)));
    CHECK(r.out(0, 0) == doctest::Approx((20.0 * e1 + 30.0 * e2) / (e1 + e2)));
}

TEST_CASE("fusion is relu of an affine map")
{
    Fixture f;
    const LayerFeatures in = initial_features(f.windows, f.batch, f.emb, f.params.input);
    MgatLayerParams lp = f.params.layers[0];
    lp.b_out << 0.5, -0.5, 0.0, 2.0;
    const Mat zero = Mat::Zero(in.timewise.rows(), 4);
    const LayerFeatures out = fuse(in, zero, zero, zero, lp);
    for (Eigen::Index r = 0; r < out.timewise.rows(); ++r) {
        CHECK(out.timewise(r, 0) == 0.5);
        CHECK(out.timewise(r, 1) == 0.0);
        CHECK(out.timewise(r, 3) == 2.0);
    }
    CHECK(out.summary.row(0) == out.timewise.row(0));
    CHECK_THROWS_AS(fuse(in, zero, zero.topRows(3), zero, lp), DataError);
}

TEST_CASE("zero attention layers return the initial features")
{
    Fixture f(0);
    const LayerFeatures out = Mgat(f.opt).forward(f.windows, f.batch, f.emb, f.topo, f.params);
    const LayerFeatures in = initial_features(f.windows, f.batch, f.emb, f.params.input);
    CHECK(out.summary == in.summary);
    CHECK(out.timewise == in.timewise);
}

TEST_CASE("node relabelling permutes the output")
{
    Fixture f(2);
    const std::vector<int> perm{3, 0, 5, 1, 4, 2};  // new index r holds old node perm[r]
    const std::vector<int> modality{1, 1, 1, 2, 2, 2};
    Mat emb(f.n, f.d), windows(f.batch * f.n, f.w);
    std::vector<int> mod(static_cast<std::size_t>(f.n));
    for (int r = 0; r < f.n; ++r) {
        emb.row(r) = f.emb.row(perm[static_cast<std::size_t>(r)]);
        mod[static_cast<std::size_t>(r)] = modality[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])];
        for (int b = 0; b < f.batch; ++b) windows.row(b * f.n + r) = f.windows.row(b * f.n + perm[static_cast<std::size_t>(r)]);
    }
    const GraphTopology topo = build_topology(emb, mod, 3);
    const Mgat net(f.opt);
    const LayerFeatures a = net.forward(f.windows, f.batch, f.emb, f.topo, f.params);
    const LayerFeatures b = net.forward(windows, f.batch, emb, topo, f.params);
    for (int bb = 0; bb < f.batch; ++bb) {
        for (int r = 0; r < f.n; ++r) {
            const int old = perm[static_cast<std::size_t>(r)];
            CHECK(b.summary.row(bb * f.n + r).isApprox(a.summary.row(bb * f.n + old), 1e-12));
            CHECK(b.timewise.middleRows((bb * f.n + r) * f.w, f.w).isApprox(a.timewise.middleRows((bb * f.n + old) * f.w, f.w), 1e-12));
        }
    }
}

TEST_CASE("without the modal branches only topk attention feeds the fusion")
{
    Fixture f(1, false);
    CHECK(f.params.layers[0].intra.w1.size() == 0);
    CHECK(f.params.layers[0].w_out.rows() == 4);
    GraphTopology cut = f.topo;
    cut.intra.setZero();
    cut.inter.setZero();
    const Mgat net(f.opt);
    CHECK(net.forward(f.windows, f.batch, f.emb, f.topo, f.params).timewise ==
          net.forward(f.windows, f.batch, f.emb, cut, f.params).timewise);
}

TEST_CASE("attention gradients match finite differences")
{
    for (bool modal : {true, false}) {
        CAPTURE(modal);
        Fixture f(2, modal, 17);
        Rng rng(99);
        const Mgat net(f.opt);
        LayerFeatures probe = net.forward(f.windows, f.batch, f.emb, f.topo, f.params);
        uniform_fill(probe.summary, -1.0, 1.0, rng);
        uniform_fill(probe.timewise, -1.0, 1.0, rng);

        auto loss = [&]() {
            const LayerFeatures out = net.forward(f.windows, f.batch, f.emb, f.topo, f.params);
            return out.summary.cwiseProduct(probe.summary).sum() + out.timewise.cwiseProduct(probe.timewise).sum();
        };
        MgatTrace trace;
        net.forward(f.windows, f.batch, f.emb, f.topo, f.params, &trace);
        MgatParams grad = f.params;
        grad.visit([](const std::string&, Mat& m) { m.setZero(); });
        Mat d_emb = Mat::Zero(f.n, f.d);
        net.backward(trace, f.emb, f.params, probe, grad, d_emb);

        std::vector<std::pair<std::string, Mat*>> ps{{"embeddings", &f.emb}};
        std::vector<std::pair<std::string, const Mat*>> gs{{"embeddings", &d_emb}};
        f.params.visit([&](const std::string& name, Mat& m) { ps.emplace_back(name, &m); });
        grad.visit([&](const std::string& name, Mat& m) { gs.emplace_back(name, &m); });
        const auto report = check_gradients(ps, gs, loss, 0.5, 3);
        CAPTURE(report.worst);
        CHECK(report.max_rel < 1e-4);
    }
}
