#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mstgat {

enum class PoolMode { Mean, Max };

// Variant switches used by ablation runs.
struct Ablation {
    bool disable_modal = false;      // drop intra/inter relational branches
    bool disable_temporal = false;   // identity + pool instead of the conv stack
    bool disable_topk = false;       // complete graph (K = N)
    bool disable_attention = false;  // uniform alpha over neighbours
};

struct Config {
    // windowing
    int window = 32;
    int stride = 1;

    // graph / M-GAT
    int embed_dim = 128;
    int topk = 5;
    int heads = 4;
    int gat_layers = 1;
    int lift_channels = 8;
    int gat_channels = 16;
    int relation_hidden = 64;

    // temporal convolution
    int conv_kernel = 16;
    int conv_layers = 1;
    int conv_channels = 16;
    PoolMode pool = PoolMode::Mean;

    // heads
    int latent_dim = 32;
    int vae_hidden = 64;
    int predictor_hidden = 64;
    int train_samples = 1;
    int infer_samples = 8;
    double logvar_min = -6.0;
    double logvar_max = 2.0;

    // optimisation
    double gamma1 = 0.5;
    double lr = 1e-3;
    int batch = 32;
    int epochs = 60;
    std::uint64_t seed = 1;
    double grad_clip = 5.0;
    int kl_warmup_epochs = 5;
    double val_fraction = 0.1;

    // scoring / thresholding
    double gamma2 = 0.8;
    double pot_q = 1e-3;
    double pot_init_level = 0.98;

    Ablation ablation;

    // Throws UsageError on out-of-range values.
    void validate() const;

    // Canonical TOML rendering; every key is written, in a fixed order.
    std::string to_toml() const;
    std::string hash() const;
};

// Keys that a config file must define explicitly.
const std::vector<std::string>& required_config_keys();

// Parses a flat TOML file (optionally with an [ablation] table).
// Missing required keys and unknown keys are UsageErrors naming the key.
Config parse_config(const std::string& text);
Config load_config(const std::filesystem::path& path);

}  // namespace mstgat
