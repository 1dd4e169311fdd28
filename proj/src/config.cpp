#include "mstgat/config.hpp"

#include "mstgat/common.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <variant>

namespace mstgat {

namespace {

using Slot = std::variant<int*, double*, bool*, std::uint64_t*, PoolMode*>;

struct Entry {
    std::string key;
    Slot slot;
};

std::vector<Entry> entries(Config& c)
{
    return {
        {"window", &c.window},
        {"stride", &c.stride},
        {"embed_dim", &c.embed_dim},
        {"topk", &c.topk},
        {"heads", &c.heads},
        {"gat_layers", &c.gat_layers},
        {"lift_channels", &c.lift_channels},
        {"gat_channels", &c.gat_channels},
        {"relation_hidden", &c.relation_hidden},
        {"conv_kernel", &c.conv_kernel},
        {"conv_layers", &c.conv_layers},
        {"conv_channels", &c.conv_channels},
        {"pool", &c.pool},
        {"latent_dim", &c.latent_dim},
        {"vae_hidden", &c.vae_hidden},
        {"predictor_hidden", &c.predictor_hidden},
        {"train_samples", &c.train_samples},
        {"infer_samples", &c.infer_samples},
        {"logvar_min", &c.logvar_min},
        {"logvar_max", &c.logvar_max},
        {"gamma1", &c.gamma1},
        {"lr", &c.lr},
        {"batch", &c.batch},
        {"epochs", &c.epochs},
        {"seed", &c.seed},
        {"grad_clip", &c.grad_clip},
        {"kl_warmup_epochs", &c.kl_warmup_epochs},
        {"val_fraction", &c.val_fraction},
        {"gamma2", &c.gamma2},
        {"pot_q", &c.pot_q},
        {"pot_init_level", &c.pot_init_level},
        {"ablation.disable_modal", &c.ablation.disable_modal},
        {"ablation.disable_temporal", &c.ablation.disable_temporal},
        {"ablation.disable_topk", &c.ablation.disable_topk},
        {"ablation.disable_attention", &c.ablation.disable_attention},
    };
}

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string strip_comment(const std::string& line)
{
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s = buf;
    // TOML floats need a '.' or exponent to stay floats.
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

template <class T>
T parse_number(const std::string& key, const std::string& raw)
{
    T value{};
    const char* first = raw.data();
    const char* last = raw.data() + raw.size();
    if constexpr (std::is_floating_point_v<T>) {
        try {
            std::size_t used = 0;
            value = std::stod(raw, &used);
            if (used != raw.size()) throw std::invalid_argument(raw);
        } catch (const std::exception&) {
            throw UsageError("config key '" + key + "': expected a number, got '" + raw + "'");
        }
    } else {
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc() || ptr != last) {
            throw UsageError("config key '" + key + "': expected an integer, got '" + raw + "'");
        }
    }
    return value;
}

void assign(const std::string& key, const std::string& raw, Slot slot)
{
    std::visit(
        [&](auto* target) {
            using T = std::remove_pointer_t<decltype(target)>;
            if constexpr (std::is_same_v<T, bool>) {
                if (raw == "true") *target = true;
                else if (raw == "false") *target = false;
                else throw UsageError("config key '" + key + "': expected true/false, got '" + raw + "'");
            } else if constexpr (std::is_same_v<T, PoolMode>) {
                if (raw == "\"mean\"") *target = PoolMode::Mean;
                else if (raw == "\"max\"") *target = PoolMode::Max;
                else throw UsageError("config key '" + key + "': expected \"mean\" or \"max\", got " + raw);
            } else {
                *target = parse_number<T>(key, raw);
            }
        },
        slot);
}

std::string render(Slot slot)
{
    return std::visit(
        [](auto* target) -> std::string {
            using T = std::remove_pointer_t<decltype(target)>;
            if constexpr (std::is_same_v<T, bool>) return *target ? "true" : "false";
            else if constexpr (std::is_same_v<T, PoolMode>) return *target == PoolMode::Mean ? "\"mean\"" : "\"max\"";
            else if constexpr (std::is_floating_point_v<T>) return format_double(*target);
            else return std::to_string(*target);
        },
        slot);
}

}  // namespace

const std::vector<std::string>& required_config_keys()
{
    static const std::vector<std::string> keys = {
        "window", "stride", "embed_dim", "topk", "heads", "gat_layers", "conv_kernel", "conv_layers",
        "latent_dim", "gamma1", "gamma2", "lr", "batch", "epochs", "seed", "pot_q", "pot_init_level",
    };
    return keys;
}

void Config::validate() const
{
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw UsageError("invalid config: " + what);
    };
    require(window >= 2, "window must be >= 2");
    require(stride >= 1, "stride must be >= 1");
    require(embed_dim >= 1, "embed_dim must be >= 1");
    require(topk >= 1, "topk must be >= 1");
    require(heads >= 1, "heads must be >= 1");
    require(gat_layers >= 0, "gat_layers must be >= 0");
    require(lift_channels >= 1, "lift_channels must be >= 1");
    require(gat_channels >= 1 && gat_channels % heads == 0, "gat_channels must be a positive multiple of heads");
    require((2 * embed_dim) % heads == 0, "2*embed_dim must be divisible by heads");
    require(relation_hidden >= 1, "relation_hidden must be >= 1");
    require(conv_kernel >= 1 && conv_kernel <= window, "conv_kernel must be in [1, window]");
    require(conv_layers >= 0, "conv_layers must be >= 0");
    require(conv_channels >= 1, "conv_channels must be >= 1");
    require(latent_dim >= 1, "latent_dim must be >= 1");
    require(vae_hidden >= 1 && predictor_hidden >= 1, "hidden widths must be >= 1");
    require(train_samples >= 1 && infer_samples >= 1, "sample counts must be >= 1");
    require(logvar_min < logvar_max, "logvar_min must be < logvar_max");
    require(gamma1 >= 0.0 && gamma1 <= 1.0, "gamma1 must be in [0, 1]");
    require(gamma2 >= 0.0, "gamma2 must be >= 0");
    require(lr > 0.0, "lr must be > 0");
    require(batch >= 1, "batch must be >= 1");
    require(epochs >= 1, "epochs must be >= 1");
    require(grad_clip > 0.0, "grad_clip must be > 0");
    require(kl_warmup_epochs >= 0, "kl_warmup_epochs must be >= 0");
    require(val_fraction > 0.0 && val_fraction < 1.0, "val_fraction must be in (0, 1)");
    require(pot_q > 0.0 && pot_q < pot_init_level && pot_init_level < 1.0, "need 0 < pot_q < pot_init_level < 1");
}

std::string Config::to_toml() const
{
    Config copy = *this;
    std::string out;
    bool in_ablation = false;
    for (const auto& e : entries(copy)) {
        std::string key = e.key;
        if (key.rfind("ablation.", 0) == 0) {
            if (!in_ablation) {
                out += "\n[ablation]\n";
                in_ablation = true;
            }
            key = key.substr(9);
        }
        out += key + " = " + render(e.slot) + "\n";
    }
    return out;
}

std::string Config::hash() const
{
    return hex64(fnv1a(to_toml()));
}

Config parse_config(const std::string& text)
{
    Config cfg;
    auto table = entries(cfg);
    std::set<std::string> seen;
    std::string section;

    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string body = trim(strip_comment(line));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']') throw UsageError("config line " + std::to_string(lineno) + ": bad table header");
            section = trim(std::string_view(body).substr(1, body.size() - 2));
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string value = trim(std::string_view(body).substr(eq + 1));
        if (!section.empty()) key = section + "." + key;

        auto it = std::find_if(table.begin(), table.end(), [&](const Entry& e) { return e.key == key; });
        if (it == table.end()) throw UsageError("unknown config key '" + key + "'");
        if (!seen.insert(key).second) throw UsageError("duplicate config key '" + key + "'");
        assign(key, value, it->slot);
    }

    for (const auto& key : required_config_keys()) {
        if (!seen.count(key)) throw UsageError("missing config key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

Config load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace mstgat
