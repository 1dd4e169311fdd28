#include "mstgat/checkpoint.hpp"
#include "mstgat/graph.hpp"
#include "mstgat/scoring.hpp"

#include "test_support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace mstgat;
using mstgat::testing::TempDir;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run cli(const TempDir& dir, const std::string& args)
{
    const std::string cmd = std::string(MSTGAT_CLI) + " " + args + " > " + (dir / "stdout").string() + " 2> " +
                            (dir / "stderr").string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(dir / "stdout");
    r.err = slurp(dir / "stderr");
    return r;
}

const char* kTinyConfig = R"(# tiny
window = 8
stride = 1
embed_dim = 4
topk = 3
heads = 2
gat_layers = 1
conv_kernel = 3
conv_layers = 1
latent_dim = 4
gamma1 = 0.5
gamma2 = 0.8
lr = 0.001
batch = 16
epochs = 2
seed = 3
pot_q = 0.001
pot_init_level = 0.98
lift_channels = 4
gat_channels = 4
conv_channels = 4
relation_hidden = 6
vae_hidden = 8
predictor_hidden = 8
)";

void write(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p);
    out << text;
}

std::string replace(std::string text, const std::string& from, const std::string& to)
{
    text.replace(text.find(from), from.size(), to);
    return text;
}

// Small synthetic dataset plus a trained model, shared across cases.
struct Pipeline {
    TempDir dir{"cli"};
    Pipeline()
    {
        write(dir / "spec.txt", "n_series = 5\nn_modalities = 2\ntrain_length = 700\ntest_length = 300\nanomaly_fraction = 0.05\n");
        write(dir / "tiny.toml", kTinyConfig);
        const std::string d = dir.path().string();
        REQUIRE(cli(dir, "synth --spec " + d + "/spec.txt --seed 4 --out-dir " + d + "/data").code == 0);
        REQUIRE(cli(dir, "train --config " + d + "/tiny.toml --train-data " + d + "/data/train.csv --modalities " + d +
                             "/data/modalities.json --out " + d + "/model").code == 0);
        REQUIRE(cli(dir, "detect --model " + d + "/model/model.ckpt --test-data " + d + "/data/test.csv --labels " + d +
                             "/data/labels.csv --out " + d + "/det").code == 0);
    }
    std::string path(const std::string& rel) const { return (dir / rel).string(); }
};

const Pipeline& pipeline()
{
    static const Pipeline p;
    return p;
}

}  // namespace

TEST_CASE("cli usage errors exit with 2")
{
    TempDir dir("usage");
    const Run v = cli(dir, "--version");
    CHECK(v.code == 0);
    CHECK(v.out.find("mstgat 0.1.0") != std::string::npos);
    CHECK(cli(dir, "").code == 2);
    CHECK(cli(dir, "frobnicate").code == 2);
    CHECK(cli(dir, "train --config").code == 2);

    write(dir / "bad.toml", replace(kTinyConfig, "latent_dim = 4\n", ""));
    write(dir / "d.csv", "a\n1\n");
    write(dir / "m.json", R"({"a": 1})");
    const std::string d = dir.path().string();
    const Run missing = cli(dir, "train --config " + d + "/bad.toml --train-data " + d + "/d.csv --modalities " + d +
                                     "/m.json --out " + d + "/o");
    CHECK(missing.code == 2);
    CHECK(missing.err.find("latent_dim") != std::string::npos);
}

TEST_CASE("cli data and numeric errors")
{
    const Pipeline& p = pipeline();
    TempDir dir("errors");
    const std::string d = dir.path().string();
    write(dir / "other.csv", "x,y\n1,2\n3,4\n");
    const Run mismatch = cli(dir, "detect --model " + p.path("model/model.ckpt") + " --test-data " + d + "/other.csv --out " + d + "/o");
    CHECK(mismatch.code == 3);
    CHECK(mismatch.err.find("series") != std::string::npos);

    write(dir / "corrupt.ckpt", slurp(p.path("model/model.ckpt")).substr(0, 400));
    CHECK(cli(dir, "export-graph --model " + d + "/corrupt.ckpt --out " + d + "/g.csv").code == 3);

    write(dir / "wild.toml", replace(kTinyConfig, "lr = 0.001", "lr = 1e12"));
    const Run diverged = cli(dir, "train --config " + d + "/wild.toml --train-data " + p.path("data/train.csv") +
                                      " --modalities " + p.path("data/modalities.json") + " --out " + d + "/w");
    CHECK(diverged.code == 4);
    CHECK(diverged.err.find("epoch") != std::string::npos);

    CHECK(cli(dir, "explain --model " + p.path("model/model.ckpt") + " --trace " + p.path("det/trace.csv") +
                       " --interval 9:3 --out " + d + "/x").code == 3);
    CHECK(cli(dir, "explain --model " + p.path("model/model.ckpt") + " --trace " + p.path("det/trace.csv") +
                       " --interval 3-9 --out " + d + "/x").code == 2);
}

TEST_CASE("cli outputs")
{
    const Pipeline& p = pipeline();
    const std::string trace = slurp(p.path("det/trace.csv"));
    CHECK(trace.rfind("# mstgat 0.1.0 config=", 0) == 0);
    const ScoreTrace t = read_trace_csv(p.path("det/trace.csv"));
    CHECK(t.length() == 300);

    const auto summary = nlohmann::json::parse(slurp(p.path("det/summary.json")));
    CHECK(summary["tool"] == "mstgat");
    CHECK(summary["length"] == 300);
    const auto metrics = nlohmann::json::parse(slurp(p.path("det/metrics.json")));
    CHECK(metrics["point_adjust"] == false);
    CHECK(metrics.contains("auc"));
    CHECK(metrics["raw"]["tp"].get<long>() + metrics["raw"]["fn"].get<long>() > 0);
    CHECK(metrics["config_hash"] == summary["config_hash"]);

    const std::string loss = slurp(p.path("model/loss_trace.csv"));
    CHECK(loss.find("epoch,l_rec,l_pred,l_joint") != std::string::npos);
    CHECK(std::count(loss.begin(), loss.end(), '\n') == 4);
}

TEST_CASE("cli runs are deterministic")
{
    const Pipeline& p = pipeline();
    TempDir dir("again");
    const std::string d = dir.path().string();
    REQUIRE(cli(dir, "synth --spec " + p.path("spec.txt") + " --seed 4 --out-dir " + d + "/data").code == 0);
    for (const char* f : {"train.csv", "test.csv", "labels.csv", "modalities.json", "anomalies.json"}) {
        CAPTURE(f);
        CHECK(slurp(dir / "data" / f) == slurp(p.dir / "data" / f));
    }
    REQUIRE(cli(dir, "train --config " + p.path("tiny.toml") + " --train-data " + d + "/data/train.csv --modalities " + d +
                         "/data/modalities.json --out " + d + "/model").code == 0);
    CHECK(slurp(dir / "model/model.ckpt") == slurp(p.dir / "model/model.ckpt"));
    REQUIRE(cli(dir, "detect --model " + d + "/model/model.ckpt --test-data " + d + "/data/test.csv --out " + d + "/det").code == 0);
    CHECK(slurp(dir / "det/trace.csv") == slurp(p.dir / "det/trace.csv"));

    REQUIRE(cli(dir, "synth --spec " + p.path("spec.txt") + " --seed 5 --out-dir " + d + "/other").code == 0);
    CHECK(slurp(dir / "other/test.csv") != slurp(p.dir / "data/test.csv"));
}

TEST_CASE("exported graph matches the checkpoint")
{
    const Pipeline& p = pipeline();
    TempDir dir("graph");
    const std::string d = dir.path().string();
    REQUIRE(cli(dir, "export-graph --model " + p.path("model/model.ckpt") + " --out " + d + "/edges.csv").code == 0);
    const ModelState m = load_checkpoint(p.path("model/model.ckpt"));
    const Mat sim = cosine_similarity(m.params.embeddings);

    std::istringstream in(slurp(dir / "edges.csv"));
    std::string line;
    std::getline(in, line);
    CHECK(line.rfind("# mstgat", 0) == 0);
    std::getline(in, line);
    CHECK(line == "src,dst,relation,similarity");
    long edges = 0;
    while (std::getline(in, line)) {
        std::stringstream row(line);
        std::string src, dst, rel, s;
        std::getline(row, src, ',');
        std::getline(row, dst, ',');
        std::getline(row, rel, ',');
        std::getline(row, s, ',');
        const auto idx = [&](const std::string& name) {
            return static_cast<int>(std::find(m.names.begin(), m.names.end(), name) - m.names.begin());
        };
        const int i = idx(dst), j = idx(src);
        const AdjMat& adj = rel == "topk" ? m.topology.topk : rel == "intra" ? m.topology.intra : m.topology.inter;
        CHECK(adj(i, j) == 1);
        CHECK(std::stod(s) == doctest::Approx(sim(i, j)).epsilon(1e-15));
        ++edges;
    }
    CHECK(edges == m.topology.topk.sum() + m.topology.intra.sum() + m.topology.inter.sum());
}

TEST_CASE("explain agrees with a brute-force ranking")
{
    const Pipeline& p = pipeline();
    TempDir dir("explain");
    const std::string d = dir.path().string();
    const ScoreTrace t = read_trace_csv(p.path("det/trace.csv"));
    for (auto [a, b] : {std::pair{20, 60}, std::pair{150, 150}, std::pair{8, 299}}) {
        const std::string iv = std::to_string(a) + ":" + std::to_string(b);
        REQUIRE(cli(dir, "explain --model " + p.path("model/model.ckpt") + " --trace " + p.path("det/trace.csv") +
                             " --interval " + iv + " --out " + d + "/x").code == 0);
        const auto doc = nlohmann::json::parse(slurp(dir / "x/interpretation.json"));
        int best = 0;
        double best_mean = -1.0;
        for (int i = 0; i < static_cast<int>(t.sensor.cols()); ++i) {
            double sum = 0.0;
            for (int r = a; r <= b; ++r) sum += t.sensor(r, i);
            if (sum / (b - a + 1) > best_mean) {
                best_mean = sum / (b - a + 1);
                best = i;
            }
        }
        CHECK(doc["ranking"][0]["name"] == t.names[static_cast<std::size_t>(best)]);
        CHECK(doc["ranking"][0]["mean_score"].get<double>() == doctest::Approx(best_mean));
        const std::string csv = slurp(dir / "x/sensor_scores.csv");
        CHECK(std::count(csv.begin(), csv.end(), '\n') == b - a + 3);
    }

    REQUIRE(cli(dir, "explain --model " + p.path("model/model.ckpt") + " --trace " + p.path("det/trace.csv") +
                         " --interval 40:50 --out " + d + "/y --test-data " + p.path("data/test.csv") +
                         " --attention-at 40").code == 0);
    const auto att = nlohmann::json::parse(slurp(dir / "y/attention.json"));
    CHECK(att["t_end"] == 40);
    CHECK(att["layers"][0]["alpha"].size() == 2);
    CHECK(att["layers"][0].contains("beta_intra"));
}

TEST_CASE("single-sensor dataset")
{
    TempDir dir("single");
    const std::string d = dir.path().string();
    write(dir / "spec.txt", "n_series = 1\nn_modalities = 1\ntrain_length = 700\ntest_length = 200\n");
    write(dir / "tiny.toml", replace(kTinyConfig, "epochs = 2", "epochs = 1"));
    REQUIRE(cli(dir, "synth --spec " + d + "/spec.txt --out-dir " + d + "/data").code == 0);
    REQUIRE(cli(dir, "train --config " + d + "/tiny.toml --train-data " + d + "/data/train.csv --modalities " + d +
                         "/data/modalities.json --out " + d + "/model").code == 0);
    REQUIRE(cli(dir, "detect --model " + d + "/model/model.ckpt --test-data " + d + "/data/test.csv --out " + d + "/det").code == 0);
    REQUIRE(cli(dir, "explain --model " + d + "/model/model.ckpt --trace " + d + "/det/trace.csv --interval 10:20 --out " + d +
                         "/x").code == 0);
    const auto doc = nlohmann::json::parse(slurp(dir / "x/interpretation.json"));
    CHECK(doc["ranking"].size() == 1);
    CHECK(doc["ranking"][0]["name"] == "s1_m1");
}
