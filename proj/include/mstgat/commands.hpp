#pragma once

#include "mstgat/model.hpp"
#include "mstgat/scoring.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace mstgat {

namespace fs = std::filesystem;

// "mstgat 0.1.0 config=<hash>", written as the first comment line of outputs.
std::string output_header(const std::string& config_hash);

struct TrainArgs {
    fs::path config;
    fs::path train_data;
    fs::path modalities;
    fs::path out;  // directory: model.ckpt, loss_trace.csv
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
};

struct DetectArgs {
    fs::path model;
    fs::path test_data;
    std::optional<fs::path> labels;
    fs::path out;  // directory: trace.csv, summary.json, metrics.json
};

struct ExplainArgs {
    fs::path model;
    fs::path trace;
    std::string interval;  // "a:b", inclusive, 0-based
    fs::path out;          // directory: interpretation.json, sensor_scores.csv
    std::optional<fs::path> test_data;
    std::optional<int> attention_at;  // window end timestamp for attention.json
};

struct SynthArgs {
    std::optional<fs::path> spec;
    std::optional<std::uint64_t> seed;
    fs::path out_dir;
};

struct ExportGraphArgs {
    fs::path model;
    fs::path out;
};

// Each command throws mstgat::Error subclasses on failure and logs progress
// to `log`.
void cmd_train(const TrainArgs& args, std::ostream& log);
void cmd_detect(const DetectArgs& args, std::ostream& log);
void cmd_explain(const ExplainArgs& args, std::ostream& log);
void cmd_synth(const SynthArgs& args, std::ostream& log);
void cmd_export_graph(const ExportGraphArgs& args, std::ostream& log);

std::pair<int, int> parse_interval(const std::string& text);

// Edge list lines "src,dst,relation,similarity"; an edge j -> i exists when
// node i aggregates from j.
std::string edge_list(const ModelState& state);

// Attention coefficients for the window ending at t_end, as a JSON document.
std::string attention_json(const ModelState& state, const TimeSeriesDataset& normalized, int t_end);

}  // namespace mstgat
