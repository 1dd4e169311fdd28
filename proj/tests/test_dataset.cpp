#include "mstgat/dataset.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <fstream>

using namespace mstgat;
using mstgat::testing::TempDir;

namespace {

void write_file(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p);
    out << text;
}

TimeSeriesDataset from_rows(std::vector<std::vector<double>> rows)
{
    TimeSeriesDataset ds;
    ds.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        ds.names.push_back("r" + std::to_string(i));
        ds.modality.push_back(1);
        for (std::size_t t = 0; t < rows[i].size(); ++t) ds.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = rows[i][t];
    }
    return ds;
}

}  // namespace

TEST_CASE("load_dataset reads series, modalities and labels")
{
    TempDir dir("load");
    write_file(dir / "d.csv", "# produced elsewhere\na,b,c\n1,2,3\n4,5,6\n7,8,9.5\n");
    write_file(dir / "m.json", R"({"a": 1, "b": 1, "c": 2, "_source": "bench"})");
    write_file(dir / "l.csv", "timestamp_index,label\n0,0\n1,1\n2,0\n");
    const TimeSeriesDataset ds = load_dataset(dir / "d.csv", dir / "m.json", dir / "l.csv");
    CHECK(ds.series() == 3);
    CHECK(ds.length() == 3);
    CHECK(ds.modalities() == 2);
    CHECK(ds.values(2, 2) == 9.5);
    CHECK(ds.values(0, 1) == 4.0);
    REQUIRE(ds.labels.has_value());
    CHECK((*ds.labels)[1] == 1);
}

TEST_CASE("load_dataset names the offending cell")
{
    TempDir dir("nan");
    write_file(dir / "d.csv", "a,b\n1,2\n3,nan\n");
    write_file(dir / "m.json", R"({"a": 1, "b": 1})");
    CHECK_THROWS_WITH_AS(load_dataset(dir / "d.csv", dir / "m.json"), doctest::Contains("column 'b'"), DataError);
    write_file(dir / "d.csv", "a,b\n1,2\n3\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir / "d.csv", dir / "m.json"), doctest::Contains("expected 2 cells"), DataError);
}

TEST_CASE("modality file must cover exactly the series")
{
    TempDir dir("mod");
    write_file(dir / "d.csv", "a,b\n1,2\n3,4\n");
    write_file(dir / "m.json", R"({"a": 1})");
    CHECK_THROWS_WITH_AS(load_dataset(dir / "d.csv", dir / "m.json"), doctest::Contains("'b'"), DataError);
    write_file(dir / "m.json", R"({"a": 1, "b": 1, "z": 2})");
    CHECK_THROWS_WITH_AS(load_dataset(dir / "d.csv", dir / "m.json"), doctest::Contains("'z'"), DataError);
    write_file(dir / "m.json", R"({"a": 1, "b": 3})");
    CHECK_THROWS_AS(load_dataset(dir / "d.csv", dir / "m.json"), DataError);
}

TEST_CASE("wide layouts load with every column")
{
    TempDir dir("wide");
    const int n = 123;
    std::string header, row, mod = "{";
    for (int i = 0; i < n; ++i) {
        header += (i ? "," : "") + std::string("f") + std::to_string(i);
        row += (i ? "," : "") + std::to_string(i * 0.5);
        mod += (i ? "," : "") + std::string("\"f") + std::to_string(i) + "\": " + std::to_string(1 + i % 4);
    }
    write_file(dir / "d.csv", header + "\n" + row + "\n" + row + "\n");
    write_file(dir / "m.json", mod + "}");
    const TimeSeriesDataset ds = load_dataset(dir / "d.csv", dir / "m.json");
    CHECK(ds.series() == 123);
    CHECK(ds.modalities() == 4);
}

TEST_CASE("min-max normalisation fitted on train only")
{
    TimeSeriesDataset train = from_rows({{0, 5, 10}, {3, 3, 3}});
    TimeSeriesDataset test = from_rows({{25, -30, 5}, {3, 4, 3}});
    const NormalizeResult r = normalize(train, test);
    CHECK(r.train.values(0, 0) == 0.0);
    CHECK(r.train.values(0, 1) == doctest::Approx(0.5));
    CHECK(r.train.values(0, 2) == 1.0);
    CHECK(r.train.values.row(1).isZero());
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0].find("r1") != std::string::npos);
    CHECK(r.test.values(0, 0) == 2.0);
    CHECK(r.test.values(0, 1) == -1.0);
    CHECK(r.test.values(0, 2) == doctest::Approx(0.5));
    CHECK(r.test.values(1, 1) == doctest::Approx(1.0));
    const TimeSeriesDataset back = denormalize(r.train, r.stats);
    CHECK(back.values.isApprox(train.values));
}

TEST_CASE("window enumeration")
{
    const TimeSeriesDataset ds = mstgat::testing::random_dataset(2, 100, 1, 3);
    CHECK(make_windows(ds, 32, 1).size() == 69);
    CHECK(window_count(100, 32, 1) == 69);

    const auto one = make_windows(ds.slice(0, 32), 32, 1);
    REQUIRE(one.size() == 1);
    CHECK_FALSE(one[0].next_value.has_value());

    const auto strided = make_windows(ds.slice(0, 10), 4, 3);
    REQUIRE(strided.size() == 3);
    // 0-based ends 3, 6, 9 are timestamps 4, 7, 10 counted from 1
    CHECK(strided[0].t_end == 3);
    CHECK(strided[1].t_end == 6);
    CHECK(strided[2].t_end == 9);
    CHECK(strided[1].window.col(0).isApprox(ds.values.col(3)));
    REQUIRE(strided[1].next_value.has_value());
    CHECK(strided[1].next_value->isApprox(ds.values.col(7)));
    CHECK_FALSE(strided[2].next_value.has_value());

    CHECK_THROWS_AS(make_windows(ds.slice(0, 10), 12, 1), DataError);
}

TEST_CASE("synthesize is deterministic in its seed")
{
    const SynthResult a = synthesize(6, 2, 500, 0.05, 11);
    const SynthResult b = synthesize(6, 2, 500, 0.05, 11);
    const SynthResult c = synthesize(6, 2, 500, 0.05, 12);
    CHECK(a.train.values == b.train.values);
    CHECK(a.test.values == b.test.values);
    CHECK(*a.test.labels == *b.test.labels);
    CHECK(a.train.names == b.train.names);
    CHECK(a.train.values != c.train.values);
    a.train.validate();
    a.test.validate();
}

TEST_CASE("synthesize anomaly budget")
{
    const SynthResult clean = synthesize(5, 2, 1000, 0.0, 4);
    for (int l : *clean.test.labels) CHECK(l == 0);
    CHECK(clean.anomalies.empty());

    const SynthResult r = synthesize(10, 3, 10000, 0.05, 4);
    int positives = 0;
    for (int l : *r.test.labels) positives += l;
    CHECK(positives >= 400);
    CHECK(positives <= 600);
    for (const auto& iv : r.anomalies) {
        CHECK(iv.start <= iv.end);
        for (int t = iv.start; t <= iv.end; ++t) CHECK((*r.test.labels)[static_cast<std::size_t>(t)] == 1);
    }
}

TEST_CASE("anomaly kinds perturb only their own series and interval")
{
    SynthSpec spec;
    spec.n_series = 6;
    spec.n_modalities = 2;
    spec.train_length = 300;
    spec.test_length = 1000;
    spec.kinds = kDecorrelation;
    spec.anomaly_fraction = 0.1;
    const SynthResult with = synthesize(spec);
    spec.anomaly_fraction = 0.0;
    const SynthResult without = synthesize(spec);
    CHECK(with.train.values == without.train.values);
    Mat diff = (with.test.values - without.test.values).cwiseAbs();
    for (const auto& iv : with.anomalies) {
        CHECK(iv.kind == kDecorrelation);
        CHECK(diff.row(iv.series).segment(iv.start, iv.end - iv.start + 1).maxCoeff() > 0.0);
        diff.row(iv.series).segment(iv.start, iv.end - iv.start + 1).setZero();
    }
    CHECK(diff.maxCoeff() == 0.0);
}

TEST_CASE("synth spec text")
{
    const SynthSpec s = parse_synth_spec("# spec\nn_series = 8\nn_modalities = 2\ntrain_length = 100\n"
                                         "test_length = 50\nanomaly_fraction = 0.1\nseed = 5\nkinds = [\"spike\", \"stuck\"]\n");
    CHECK(s.n_series == 8);
    CHECK(s.train_length == 100);
    CHECK(s.test_length == 50);
    CHECK(s.seed == 5);
    CHECK(s.kinds == (kSpike | kStuck));
    CHECK_THROWS_AS(parse_synth_spec("n_sereis = 3\n"), UsageError);
}

TEST_CASE("csv writers round-trip through the loaders")
{
    TempDir dir("rt");
    const SynthResult r = synthesize(4, 2, 200, 0.05, 9);
    write_values_csv(dir / "t.csv", r.test, "mstgat test");
    write_modalities_json(dir / "m.json", r.test);
    write_labels_csv(dir / "l.csv", *r.test.labels, "mstgat test");
    const TimeSeriesDataset back = load_dataset(dir / "t.csv", dir / "m.json", dir / "l.csv");
    CHECK(back.names == r.test.names);
    CHECK(back.modality == r.test.modality);
    CHECK(back.values == r.test.values);
    CHECK(*back.labels == *r.test.labels);
}
