#include "mstgat/commands.hpp"

#include "mstgat/checkpoint.hpp"
#include "mstgat/config.hpp"
#include "mstgat/dataset.hpp"
#include "mstgat/metrics.hpp"
#include "mstgat/training.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace mstgat {

using nlohmann::json;

namespace {

std::string read_text(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

json tagged(const std::string& config_hash)
{
    return {{"tool", std::string(kToolName)}, {"version", std::string(kToolVersion)}, {"config_hash", config_hash}};
}

json matrix_rows(const Mat& m)
{
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        rows.push_back(std::vector<double>(m.row(i).data(), m.row(i).data() + m.cols()));
    }
    return rows;
}

json metrics_json(const DetectionMetrics& m)
{
    return {{"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1},
            {"tp", m.confusion.tp},
            {"fp", m.confusion.fp},
            {"fn", m.confusion.fn},
            {"tn", m.confusion.tn}};
}

}  // namespace

std::string output_header(const std::string& config_hash)
{
    return std::string(kToolName) + " " + std::string(kToolVersion) + " config=" + config_hash;
}

std::pair<int, int> parse_interval(const std::string& text)
{
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw UsageError("interval must look like a:b, got '" + text + "'");
    try {
        std::size_t used_a = 0, used_b = 0;
        const std::string a = text.substr(0, colon);
        const std::string b = text.substr(colon + 1);
        const int lo = std::stoi(a, &used_a);
        const int hi = std::stoi(b, &used_b);
        if (used_a != a.size() || used_b != b.size()) throw std::invalid_argument("trailing");
        return {lo, hi};
    } catch (const std::exception&) {
        throw UsageError("interval must look like a:b with integers, got '" + text + "'");
    }
}

void cmd_train(const TrainArgs& args, std::ostream& log)
{
    Config cfg = load_config(args.config);
    if (args.seed) cfg.seed = *args.seed;
    if (args.epochs) cfg.epochs = *args.epochs;
    cfg.validate();

    const TimeSeriesDataset raw = load_dataset(args.train_data, args.modalities);
    ensure_dir(args.out);

    TrainOptions opt;
    opt.on_epoch = [&log](const LossRecord& r) {
        log << "epoch " << r.epoch << " l_rec=" << r.l_rec << " l_pred=" << r.l_pred << " l_joint=" << r.l_joint
            << "\n";
        log.flush();
    };
    std::vector<std::string> warnings;
    const ModelState state = train_from_raw(raw, cfg, opt, &warnings);
    for (const auto& w : warnings) log << "warning: " << w << "\n";

    save_checkpoint(args.out / "model.ckpt", state);
    std::ostringstream csv;
    csv << "# " << output_header(cfg.hash()) << "\n";
    csv << "epoch,l_rec,l_pred,l_joint\n";
    csv << std::setprecision(17);
    for (const auto& r : state.loss_trace) csv << r.epoch << "," << r.l_rec << "," << r.l_pred << "," << r.l_joint << "\n";
    write_text(args.out / "loss_trace.csv", csv.str());
    log << "threshold " << std::setprecision(17) << state.calibration.threshold << "\n";
    log << "wrote " << (args.out / "model.ckpt").string() << "\n";
}

void cmd_detect(const DetectArgs& args, std::ostream& log)
{
    const ModelState model = load_checkpoint(args.model);
    const std::string hash = model.config.hash();
    const TimeSeriesDataset raw = align_to_model(model, load_values_csv(args.test_data));
    const TimeSeriesDataset test = apply_norm(raw, model.norm, true);
    const ScoreTrace trace = score_series(model, test);
    ensure_dir(args.out);
    write_trace_csv((args.out / "trace.csv").string(), trace, output_header(hash));

    long detected = 0;
    for (int d : trace.detections) detected += d;
    json summary = tagged(hash);
    summary["threshold"] = trace.threshold;
    summary["length"] = trace.length();
    summary["warmup"] = trace.warmup;
    summary["detections"] = detected;
    write_text(args.out / "summary.json", summary.dump(2) + "\n");
    log << "threshold " << std::setprecision(17) << trace.threshold << ", " << detected << " of " << trace.length()
        << " timestamps flagged\n";

    if (!args.labels) return;
    const std::vector<int> labels = load_labels(*args.labels, trace.length());
    // evaluation covers the scored region only
    const auto from = static_cast<std::size_t>(trace.warmup);
    const std::span<const int> y(labels.data() + from, labels.size() - from);
    const std::span<const int> pred(trace.detections.data() + from, trace.detections.size() - from);
    const std::vector<double> scores(trace.score.data() + from, trace.score.data() + trace.score.size());

    json metrics = tagged(hash);
    metrics["evaluated_from"] = trace.warmup;
    metrics["threshold"] = trace.threshold;
    const DetectionMetrics raw_m = precision_recall_f1(pred, y);
    const std::vector<int> adjusted = point_adjust(pred, y);
    const DetectionMetrics adj_m = precision_recall_f1(adjusted, y);
    metrics["point_adjust"] = false;
    metrics["raw"] = metrics_json(raw_m);
    metrics["point_adjusted"] = metrics_json(adj_m);
    try {
        metrics["auc"] = auc(scores, y);
    } catch (const DataError&) {
        metrics["auc"] = nullptr;
    }
    write_text(args.out / "metrics.json", metrics.dump(2) + "\n");
    log << "precision " << raw_m.precision << " recall " << raw_m.recall << " f1 " << raw_m.f1;
    if (!metrics["auc"].is_null()) log << " auc " << metrics["auc"].get<double>();
    log << "\n";
}

void cmd_explain(const ExplainArgs& args, std::ostream& log)
{
    const ModelState model = load_checkpoint(args.model);
    const std::string hash = model.config.hash();
    const ScoreTrace trace = read_trace_csv(args.trace.string());
    if (trace.sensor.cols() != model.nodes()) throw DataError("trace does not match the model's series count");
    const auto [a, b] = parse_interval(args.interval);
    const std::vector<SensorRank> ranks = interpret(trace, a, b);

    ensure_dir(args.out);
    json doc = tagged(hash);
    doc["interval"] = {a, b};
    json ranking = json::array();
    for (const auto& r : ranks) ranking.push_back({{"name", r.name}, {"index", r.index}, {"mean_score", r.mean_score}});
    doc["ranking"] = std::move(ranking);
    write_text(args.out / "interpretation.json", doc.dump(2) + "\n");

    std::ostringstream csv;
    csv << "# " << output_header(hash) << "\n" << "t";
    for (const auto& n : trace.names) csv << "," << n;
    csv << "\n" << std::setprecision(17);
    for (int t = a; t <= b; ++t) {
        csv << t;
        for (Eigen::Index i = 0; i < trace.sensor.cols(); ++i) csv << "," << trace.sensor(t, i);
        csv << "\n";
    }
    write_text(args.out / "sensor_scores.csv", csv.str());

    if (args.attention_at) {
        if (!args.test_data) throw UsageError("attention export needs --test-data");
        const TimeSeriesDataset raw = align_to_model(model, load_values_csv(*args.test_data));
        write_text(args.out / "attention.json",
                   attention_json(model, apply_norm(raw, model.norm, true), *args.attention_at) + "\n");
    }
    log << "top sensor over [" << a << ", " << b << "]: " << ranks.front().name << " (mean score "
        << ranks.front().mean_score << ")\n";
}

void cmd_synth(const SynthArgs& args, std::ostream& log)
{
    SynthSpec spec;
    std::string spec_text;
    if (args.spec) {
        spec_text = read_text(*args.spec);
        spec = parse_synth_spec(spec_text);
    }
    if (args.seed) spec.seed = *args.seed;
    const SynthResult r = synthesize(spec);

    std::ostringstream key;
    key << spec_text << "\nseed=" << spec.seed;
    const std::string header = output_header(hex64(fnv1a(key.str())));

    ensure_dir(args.out_dir);
    write_values_csv(args.out_dir / "train.csv", r.train, header);
    write_values_csv(args.out_dir / "test.csv", r.test, header);
    write_labels_csv(args.out_dir / "labels.csv", *r.test.labels, header);
    write_modalities_json(args.out_dir / "modalities.json", r.train);

    json anomalies = json::array();
    for (const auto& iv : r.anomalies) {
        anomalies.push_back({{"start", iv.start},
                             {"end", iv.end},
                             {"kind", to_string(iv.kind)},
                             {"series", iv.series},
                             {"name", r.test.names[static_cast<std::size_t>(iv.series)]}});
    }
    json doc = {{"tool", std::string(kToolName)}, {"version", std::string(kToolVersion)}, {"anomalies", anomalies}};
    write_text(args.out_dir / "anomalies.json", doc.dump(2) + "\n");
    log << "wrote " << r.train.series() << " series, " << r.train.length() << " train / " << r.test.length()
        << " test timestamps, " << r.anomalies.size() << " anomaly intervals to " << args.out_dir.string() << "\n";
}

std::string edge_list(const ModelState& state)
{
    const Mat sim = cosine_similarity(state.params.embeddings);
    std::ostringstream out;
    out << std::setprecision(17);
    out << "src,dst,relation,similarity\n";
    const std::pair<const char*, const AdjMat*> relations[] = {
        {"topk", &state.topology.topk}, {"intra", &state.topology.intra}, {"inter", &state.topology.inter}};
    for (const auto& [name, adj] : relations) {
        for (Eigen::Index i = 0; i < adj->rows(); ++i) {
            for (Eigen::Index j = 0; j < adj->cols(); ++j) {
                if ((*adj)(i, j) == 0) continue;
                out << state.names[static_cast<std::size_t>(j)] << "," << state.names[static_cast<std::size_t>(i)] << ","
                    << name << "," << sim(i, j) << "\n";
            }
        }
    }
    return out.str();
}

void cmd_export_graph(const ExportGraphArgs& args, std::ostream& log)
{
    const ModelState model = load_checkpoint(args.model);
    if (args.out.has_parent_path()) ensure_dir(args.out.parent_path());
    write_text(args.out, "# " + output_header(model.config.hash()) + "\n" + edge_list(model));
    log << "wrote " << args.out.string() << "\n";
}

std::string attention_json(const ModelState& state, const TimeSeriesDataset& normalized, int t_end)
{
    const TimeSeriesDataset ds = align_to_model(state, normalized);
    const int w = state.config.window;
    if (t_end < w - 1 || t_end >= ds.length()) {
        throw DataError("attention window end " + std::to_string(t_end) + " outside [" + std::to_string(w - 1) + ", " +
                        std::to_string(ds.length() - 1) + "]");
    }
    const Mat window = ds.values.middleCols(t_end - w + 1, w);
    const Mgat mgat(mgat_options(state.config));
    MgatTrace trace;
    mgat.forward(window, 1, state.params.embeddings, state.topology, state.params.mgat, &trace);

    json doc = tagged(state.config.hash());
    doc["t_end"] = t_end;
    doc["names"] = state.names;
    json layers = json::array();
    for (const auto& layer : trace.layers) {
        json l;
        json alpha = json::array();
        for (const auto& a : layer.alpha) alpha.push_back(matrix_rows(a));
        l["alpha"] = std::move(alpha);
        if (layer.intra.beta.size() > 0) l["beta_intra"] = matrix_rows(layer.intra.beta);
        if (layer.inter.beta.size() > 0) l["beta_inter"] = matrix_rows(layer.inter.beta);
        layers.push_back(std::move(l));
    }
    doc["layers"] = std::move(layers);
    return doc.dump(2);
}

}  // namespace mstgat
