#include "mstgat/commands.hpp"
#include "mstgat/common.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    using namespace mstgat;

    CLI::App app{"Multimodal spatial-temporal graph attention anomaly detector"};
    app.set_version_flag("--version", std::string(kToolName) + " " + std::string(kToolVersion));
    app.require_subcommand(1);

    TrainArgs train;
    std::uint64_t train_seed = 0;
    int train_epochs = 0;
    auto* train_cmd = app.add_subcommand("train", "Train a model and calibrate its threshold");
    train_cmd->add_option("--config", train.config, "TOML config")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--train-data", train.train_data, "Training CSV")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--modalities", train.modalities, "Modality JSON")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--out", train.out, "Output directory")->required();
    auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Override the config seed");
    auto* epochs_opt = train_cmd->add_option("--epochs", train_epochs, "Override the config epoch count");

    DetectArgs detect;
    std::string detect_labels;
    auto* detect_cmd = app.add_subcommand("detect", "Score a test series and flag anomalies");
    detect_cmd->add_option("--model", detect.model, "Checkpoint")->required()->check(CLI::ExistingFile);
    detect_cmd->add_option("--test-data", detect.test_data, "Test CSV")->required()->check(CLI::ExistingFile);
    auto* labels_opt = detect_cmd->add_option("--labels", detect_labels, "Labels CSV")->check(CLI::ExistingFile);
    detect_cmd->add_option("--out", detect.out, "Output directory")->required();

    ExplainArgs explain;
    std::string explain_test;
    int attention_at = 0;
    auto* explain_cmd = app.add_subcommand("explain", "Rank sensors over an anomaly interval");
    explain_cmd->add_option("--model", explain.model, "Checkpoint")->required()->check(CLI::ExistingFile);
    explain_cmd->add_option("--trace", explain.trace, "Score trace CSV from detect")->required()->check(CLI::ExistingFile);
    explain_cmd->add_option("--interval", explain.interval, "a:b, inclusive")->required();
    explain_cmd->add_option("--out", explain.out, "Output directory")->required();
    auto* explain_test_opt = explain_cmd->add_option("--test-data", explain_test, "Test CSV (for --attention-at)");
    auto* attention_opt = explain_cmd->add_option("--attention-at", attention_at, "Export attention for the window ending here");

    SynthArgs synth;
    std::string synth_spec;
    std::uint64_t synth_seed = 0;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic multimodal dataset");
    auto* spec_opt = synth_cmd->add_option("--spec", synth_spec, "Generator spec file")->check(CLI::ExistingFile);
    auto* synth_seed_opt = synth_cmd->add_option("--seed", synth_seed, "Override the spec seed");
    synth_cmd->add_option("--out-dir", synth.out_dir, "Output directory")->required();

    ExportGraphArgs graph;
    auto* graph_cmd = app.add_subcommand("export-graph", "Write the learned topology as an edge list");
    graph_cmd->add_option("--model", graph.model, "Checkpoint")->required()->check(CLI::ExistingFile);
    graph_cmd->add_option("--out", graph.out, "Edge-list CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (train_cmd->parsed()) {
            if (*seed_opt) train.seed = train_seed;
            if (*epochs_opt) train.epochs = train_epochs;
            cmd_train(train, std::cout);
        } else if (detect_cmd->parsed()) {
            if (*labels_opt) detect.labels = detect_labels;
            cmd_detect(detect, std::cout);
        } else if (explain_cmd->parsed()) {
            if (*explain_test_opt) explain.test_data = explain_test;
            if (*attention_opt) explain.attention_at = attention_at;
            cmd_explain(explain, std::cout);
        } else if (synth_cmd->parsed()) {
            if (*spec_opt) synth.spec = synth_spec;
            if (*synth_seed_opt) synth.seed = synth_seed;
            cmd_synth(synth, std::cout);
        } else if (graph_cmd->parsed()) {
            cmd_export_graph(graph, std::cout);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
