#include "mstgat/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace mstgat {

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

bool skippable(const std::string& line)
{
    const std::string t = trim(line);
    return t.empty() || t.front() == '#';
}

std::ifstream open_or_throw(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

}  // namespace

int TimeSeriesDataset::modalities() const
{
    return modality.empty() ? 0 : *std::max_element(modality.begin(), modality.end());
}

void TimeSeriesDataset::validate() const
{
    const int n = series();
    if (n < 1) throw DataError("dataset has no series");
    if (static_cast<int>(names.size()) != n) throw DataError("name count does not match series count");
    if (static_cast<int>(modality.size()) != n) throw DataError("modality count does not match series count");
    std::set<std::string> unique(names.begin(), names.end());
    if (static_cast<int>(unique.size()) != n) throw DataError("series names must be unique");

    const int m = modalities();
    if (m > n) throw DataError("more modalities than series");
    std::vector<bool> present(static_cast<std::size_t>(m) + 1, false);
    for (int id : modality) {
        if (id < 1 || id > m) throw DataError("modality id " + std::to_string(id) + " outside 1..M");
        present[static_cast<std::size_t>(id)] = true;
    }
    for (int id = 1; id <= m; ++id) {
        if (!present[static_cast<std::size_t>(id)]) {
            throw DataError("modality id " + std::to_string(id) + " has no series (ids must be dense 1..M)");
        }
    }
    if (!values.allFinite()) throw DataError("dataset contains non-finite values");
    if (labels) {
        if (static_cast<int>(labels->size()) != length()) throw DataError("label count does not match length");
        for (int l : *labels) {
            if (l != 0 && l != 1) throw DataError("labels must be 0/1");
        }
    }
}

TimeSeriesDataset TimeSeriesDataset::slice(int begin, int end) const
{
    if (begin < 0 || end > length() || begin >= end) throw DataError("invalid dataset slice");
    TimeSeriesDataset out;
    out.names = names;
    out.modality = modality;
    out.split = split;
    out.values = values.middleCols(begin, end - begin);
    if (labels) out.labels = std::vector<int>(labels->begin() + begin, labels->begin() + end);
    return out;
}

TimeSeriesDataset load_values_csv(const std::filesystem::path& data_path)
{
    auto in = open_or_throw(data_path);
    std::string line;
    int lineno = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (skippable(line)) continue;
        header = split_csv(line);
        break;
    }
    if (header.empty()) throw DataError(data_path.string() + ": missing header row");
    for (const auto& h : header) {
        if (h.empty()) throw DataError(data_path.string() + ": empty series name in header");
    }

    const std::size_t n = header.size();
    std::vector<double> flat;  // timestamp-major
    int rows = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (skippable(line)) continue;
        const auto cells = split_csv(line);
        if (cells.size() != n) {
            throw DataError(data_path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(n) +
                            " cells, found " + std::to_string(cells.size()));
        }
        for (std::size_t c = 0; c < n; ++c) {
            double v = 0.0;
            bool ok = true;
            try {
                std::size_t used = 0;
                v = std::stod(cells[c], &used);
                ok = used == cells[c].size();
            } catch (const std::exception&) {
                ok = false;
            }
            if (!ok || !std::isfinite(v)) {
                throw DataError(data_path.string() + ":" + std::to_string(lineno) + ": bad value '" + cells[c] +
                                "' in column '" + header[c] + "' (row " + std::to_string(rows) + ", column " +
                                std::to_string(c) + ")");
            }
            flat.push_back(v);
        }
        ++rows;
    }
    if (rows == 0) throw DataError(data_path.string() + ": no data rows");

    TimeSeriesDataset ds;
    ds.names = header;
    ds.values.resize(static_cast<Eigen::Index>(n), rows);
    for (int t = 0; t < rows; ++t) {
        for (std::size_t i = 0; i < n; ++i) ds.values(static_cast<Eigen::Index>(i), t) = flat[t * n + i];
    }
    return ds;
}

std::vector<int> load_modalities(const std::filesystem::path& modality_path, const std::vector<std::string>& names)
{
    auto in = open_or_throw(modality_path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(modality_path.string() + ": invalid JSON: " + e.what());
    }
    if (!doc.is_object()) throw DataError(modality_path.string() + ": expected a JSON object");

    std::map<std::string, int> mapping;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!it.key().empty() && it.key().front() == '_') continue;  // metadata
        if (!it.value().is_number_integer()) {
            throw DataError(modality_path.string() + ": modality of '" + it.key() + "' is not an integer");
        }
        mapping[it.key()] = it.value().get<int>();
    }
    for (const auto& [key, id] : mapping) {
        if (std::find(names.begin(), names.end(), key) == names.end()) {
            throw DataError(modality_path.string() + ": unknown series '" + key + "'");
        }
    }
    std::vector<int> out;
    out.reserve(names.size());
    for (const auto& name : names) {
        auto it = mapping.find(name);
        if (it == mapping.end()) throw DataError(modality_path.string() + ": no modality for series '" + name + "'");
        out.push_back(it->second);
    }
    return out;
}

std::vector<int> load_labels(const std::filesystem::path& labels_path, int length)
{
    auto in = open_or_throw(labels_path);
    std::vector<int> labels(static_cast<std::size_t>(length), 0);
    std::string line;
    int lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (skippable(line)) continue;
        const auto cells = split_csv(line);
        if (!header_seen) {
            header_seen = true;
            if (cells.size() == 2 && cells[0] == "timestamp_index" && cells[1] == "label") continue;
            throw DataError(labels_path.string() + ": expected header 'timestamp_index,label'");
        }
        if (cells.size() != 2) throw DataError(labels_path.string() + ":" + std::to_string(lineno) + ": expected 2 cells");
        int t = -1;
        int l = -1;
        try {
            t = std::stoi(cells[0]);
            l = std::stoi(cells[1]);
        } catch (const std::exception&) {
            throw DataError(labels_path.string() + ":" + std::to_string(lineno) + ": non-integer cell");
        }
        if (t < 0 || t >= length) {
            throw DataError(labels_path.string() + ":" + std::to_string(lineno) + ": timestamp index out of range");
        }
        if (l != 0 && l != 1) throw DataError(labels_path.string() + ":" + std::to_string(lineno) + ": label must be 0/1");
        labels[static_cast<std::size_t>(t)] = l;
    }
    return labels;
}

TimeSeriesDataset load_dataset(const std::filesystem::path& data_path, const std::filesystem::path& modality_path,
                               const std::optional<std::filesystem::path>& labels_path)
{
    TimeSeriesDataset ds = load_values_csv(data_path);
    ds.modality = load_modalities(modality_path, ds.names);
    if (labels_path) {
        ds.labels = load_labels(*labels_path, ds.length());
        ds.split = Split::Test;
    }
    ds.validate();
    return ds;
}

void write_values_csv(const std::filesystem::path& path, const TimeSeriesDataset& ds, const std::string& header_comment)
{
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    for (int i = 0; i < ds.series(); ++i) out << (i ? "," : "") << ds.names[static_cast<std::size_t>(i)];
    out << "\n";
    out.precision(17);
    for (int t = 0; t < ds.length(); ++t) {
        for (int i = 0; i < ds.series(); ++i) out << (i ? "," : "") << ds.values(i, t);
        out << "\n";
    }
}

void write_modalities_json(const std::filesystem::path& path, const TimeSeriesDataset& ds)
{
    nlohmann::ordered_json doc = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < ds.names.size(); ++i) doc[ds.names[i]] = ds.modality[i];
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

void write_labels_csv(const std::filesystem::path& path, const std::vector<int>& labels, const std::string& header_comment)
{
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "timestamp_index,label\n";
    for (std::size_t t = 0; t < labels.size(); ++t) out << t << "," << labels[t] << "\n";
}

NormStats fit_norm(const TimeSeriesDataset& train, std::vector<std::string>* warnings)
{
    NormStats stats;
    for (int i = 0; i < train.series(); ++i) {
        const double lo = train.values.row(i).minCoeff();
        const double hi = train.values.row(i).maxCoeff();
        double scale = hi - lo;
        if (!(scale > 0.0)) {
            scale = 1.0;
            if (warnings) {
                warnings->push_back("series '" + train.names[static_cast<std::size_t>(i)] +
                                    "' is constant in train; scaling by 1");
            }
        }
        stats.offset.push_back(lo);
        stats.scale.push_back(scale);
    }
    return stats;
}

TimeSeriesDataset apply_norm(const TimeSeriesDataset& ds, const NormStats& stats, bool clip)
{
    if (static_cast<int>(stats.offset.size()) != ds.series()) throw DataError("normalisation stats do not match dataset");
    TimeSeriesDataset out = ds;
    for (int i = 0; i < ds.series(); ++i) {
        auto row = out.values.row(i);
        row = (row.array() - stats.offset[static_cast<std::size_t>(i)]) / stats.scale[static_cast<std::size_t>(i)];
        if (clip) row = row.cwiseMax(kTestClipLow).cwiseMin(kTestClipHigh);
    }
    return out;
}

TimeSeriesDataset denormalize(const TimeSeriesDataset& ds, const NormStats& stats)
{
    TimeSeriesDataset out = ds;
    for (int i = 0; i < ds.series(); ++i) {
        auto row = out.values.row(i);
        row = row.array() * stats.scale[static_cast<std::size_t>(i)] + stats.offset[static_cast<std::size_t>(i)];
    }
    return out;
}

NormalizeResult normalize(const TimeSeriesDataset& train, const TimeSeriesDataset& test)
{
    if (train.names != test.names || train.modality != test.modality) {
        throw DataError("train and test must have identical series names and modalities");
    }
    NormalizeResult r;
    r.stats = fit_norm(train, &r.warnings);
    r.train = apply_norm(train, r.stats, false);
    r.test = apply_norm(test, r.stats, true);
    return r;
}

int window_count(int length, int w, int stride)
{
    if (w > length) return 0;
    return (length - w) / stride + 1;
}

std::vector<WindowBatch> make_windows(const TimeSeriesDataset& ds, int w, int stride)
{
    if (w < 2) throw DataError("window length must be >= 2");
    if (stride < 1) throw DataError("stride must be >= 1");
    if (w > ds.length()) {
        throw DataError("window length " + std::to_string(w) + " exceeds series length " + std::to_string(ds.length()));
    }
    const int count = window_count(ds.length(), w, stride);
    std::vector<WindowBatch> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        WindowBatch wb;
        wb.t_end = w - 1 + k * stride;
        wb.window = ds.values.middleCols(wb.t_end - w + 1, w);
        if (wb.t_end + 1 < ds.length()) wb.next_value = ds.values.col(wb.t_end + 1);
        out.push_back(std::move(wb));
    }
    return out;
}

std::string to_string(AnomalyKind kind)
{
    switch (kind) {
    case kSpike: return "spike";
    case kStuck: return "stuck";
    case kDecorrelation: return "decorrelation";
    default: return "unknown";
    }
}

namespace {

struct Driver {
    double amp1, period1, phase1;
    double amp2, period2, phase2;
    double amp_slow, period_slow, phase_slow;

    double operator()(double t) const
    {
        constexpr double two_pi = 2.0 * std::numbers::pi;
        return amp1 * std::sin(two_pi * t / period1 + phase1) + amp2 * std::sin(two_pi * t / period2 + phase2) +
               amp_slow * std::sin(two_pi * t / period_slow + phase_slow);
    }
};

}  // namespace

SynthResult synthesize(const SynthSpec& spec)
{
    if (spec.n_series < 1 || spec.n_modalities < 1 || spec.n_modalities > spec.n_series) {
        throw UsageError("synthesize: need 1 <= n_modalities <= n_series");
    }
    if (spec.train_length < 1 || spec.test_length < 1) throw UsageError("synthesize: lengths must be positive");
    if (spec.anomaly_fraction < 0.0 || spec.anomaly_fraction > 0.3) {
        throw UsageError("synthesize: anomaly_fraction must be in [0, 0.3]");
    }
    if (spec.kinds == 0 || (spec.kinds & ~static_cast<unsigned>(kAllKinds)) != 0) {
        throw UsageError("synthesize: invalid anomaly kind mask");
    }

    Rng sys(derive_seed(spec.seed, "system"));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto between = [&](Rng& r, double lo, double hi) { return lo + (hi - lo) * unif(r); };
    constexpr double two_pi = 2.0 * std::numbers::pi;

    const int n = spec.n_series;
    const int m = spec.n_modalities;
    const int total = spec.train_length + spec.test_length;

    std::vector<Driver> drivers;
    for (int k = 0; k < m; ++k) {
        drivers.push_back(Driver{
            between(sys, 0.6, 1.0), between(sys, 40.0, 120.0), between(sys, 0.0, two_pi),
            between(sys, 0.2, 0.4), between(sys, 12.0, 30.0), between(sys, 0.0, two_pi),
            between(sys, 0.2, 0.4), between(sys, 600.0, 1500.0), between(sys, 0.0, two_pi),
        });
    }

    // Every modality gets at least one series, the rest at random.
    std::vector<int> modality(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) modality[static_cast<std::size_t>(i)] = i < m ? i + 1 : 1 + static_cast<int>(sys() % m);

    std::vector<double> gain(n), offset(n), lag(n);
    for (int i = 0; i < n; ++i) {
        gain[i] = between(sys, 0.5, 2.0);
        offset[i] = between(sys, -5.0, 5.0);
        lag[i] = std::floor(between(sys, 0.0, 6.0));
    }

    // Modality-shared AR(1) noise plus independent per-series noise.
    std::normal_distribution<double> gauss(0.0, 1.0);
    Mat shared(m, total);
    for (int k = 0; k < m; ++k) {
        double e = 0.0;
        for (int t = 0; t < total; ++t) {
            e = 0.9 * e + 0.5 * spec.noise * gauss(sys);
            shared(k, t) = e;
        }
    }

    Mat values(n, total);
    Mat driven(n, total);  // driver component alone, used by decorrelation anomalies
    for (int i = 0; i < n; ++i) {
        const int k = modality[i] - 1;
        for (int t = 0; t < total; ++t) {
            const double d = drivers[k](t - lag[i]);
            driven(i, t) = d;
            values(i, t) = gain[i] * d + offset[i] + gain[i] * (shared(k, t) + spec.noise * gauss(sys));
        }
    }

    SynthResult result;
    for (auto* ds : {&result.train, &result.test}) {
        ds->modality = modality;
        for (int i = 0; i < n; ++i) ds->names.push_back("s" + std::to_string(i + 1) + "_m" + std::to_string(modality[i]));
    }
    result.train.values = values.leftCols(spec.train_length);
    result.train.split = Split::Train;
    result.test.values = values.rightCols(spec.test_length);
    result.test.split = Split::Test;

    // Anomalies draw from their own stream.
    Rng an(derive_seed(spec.seed, "anomaly"));
    const int len = spec.test_length;
    std::vector<int> labels(static_cast<std::size_t>(len), 0);
    const int target = static_cast<int>(std::lround(spec.anomaly_fraction * len));
    const int lead_in = std::min(64, len / 4);
    constexpr int gap = 10;
    std::vector<AnomalyKind> kinds;
    for (AnomalyKind k : {kSpike, kStuck, kDecorrelation}) {
        if (spec.kinds & k) kinds.push_back(k);
    }

    int labelled = 0;
    int failures = 0;
    while (labelled < target && failures < 10000) {
        const AnomalyKind kind = kinds[an() % kinds.size()];
        int length = kind == kSpike ? 1 : 10 + static_cast<int>(an() % 21);
        length = std::min(length, target - labelled);
        const int lo = lead_in;
        const int hi = len - length;
        if (hi <= lo) break;
        const int start = lo + static_cast<int>(an() % static_cast<std::uint64_t>(hi - lo));
        const int end = start + length - 1;
        bool clash = false;
        for (const auto& a : result.anomalies) {
            if (start <= a.end + gap && end >= a.start - gap) {
                clash = true;
                break;
            }
        }
        if (clash) {
            ++failures;
            continue;
        }
        const int series = static_cast<int>(an() % static_cast<std::uint64_t>(n));
        const Driver& drv = drivers[modality[series] - 1];
        const double span = gain[series] * (drv.amp1 + drv.amp2 + drv.amp_slow);
        const double sign = (an() & 1u) ? 1.0 : -1.0;
        auto row = result.test.values.row(series);
        switch (kind) {
        case kSpike:
            row(start) += sign * between(an, 3.0, 4.0) * span;
            break;
        case kStuck: {
            const double held = offset[series] + sign * between(an, 3.0, 4.0) * span;
            for (int t = start; t <= end; ++t) row(t) = held;
            break;
        }
        case kDecorrelation: {
            const double k = between(an, 4.0, 5.0);
            for (int t = start; t <= end; ++t) row(t) -= k * gain[series] * driven(series, spec.train_length + t);
            break;
        }
        default: break;
        }
        for (int t = start; t <= end; ++t) labels[static_cast<std::size_t>(t)] = 1;
        labelled += length;
        result.anomalies.push_back({start, end, kind, series});
    }
    std::sort(result.anomalies.begin(), result.anomalies.end(),
              [](const AnomalyInterval& a, const AnomalyInterval& b) { return a.start < b.start; });
    result.test.labels = std::move(labels);
    return result;
}

SynthResult synthesize(int n_series, int n_modalities, int length, double anomaly_fraction, std::uint64_t seed)
{
    SynthSpec spec;
    spec.n_series = n_series;
    spec.n_modalities = n_modalities;
    spec.train_length = length;
    spec.test_length = length;
    spec.anomaly_fraction = anomaly_fraction;
    spec.seed = seed;
    return synthesize(spec);
}

SynthSpec parse_synth_spec(const std::string& text)
{
    SynthSpec spec;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw UsageError("synth spec: expected 'key = value', got '" + body + "'");
        const std::string key = trim(std::string_view(body).substr(0, eq));
        std::string value = trim(std::string_view(body).substr(eq + 1));
        try {
            if (key == "n_series") spec.n_series = std::stoi(value);
            else if (key == "n_modalities") spec.n_modalities = std::stoi(value);
            else if (key == "train_length") spec.train_length = std::stoi(value);
            else if (key == "test_length") spec.test_length = std::stoi(value);
            else if (key == "anomaly_fraction") spec.anomaly_fraction = std::stod(value);
            else if (key == "noise") spec.noise = std::stod(value);
            else if (key == "seed") spec.seed = std::stoull(value);
            else if (key == "kinds") {
                value.erase(std::remove_if(value.begin(), value.end(), [](char c) { return c == '"' || c == '[' || c == ']'; }),
                            value.end());
                spec.kinds = 0;
                std::istringstream parts(value);
                std::string part;
                while (std::getline(parts, part, ',')) {
                    part = trim(part);
                    if (part == "spike") spec.kinds |= kSpike;
                    else if (part == "stuck") spec.kinds |= kStuck;
                    else if (part == "decorrelation") spec.kinds |= kDecorrelation;
                    else throw UsageError("synth spec: unknown anomaly kind '" + part + "'");
                }
            } else {
                throw UsageError("synth spec: unknown key '" + key + "'");
            }
        } catch (const std::logic_error&) {
            throw UsageError("synth spec: bad value for '" + key + "'");
        }
    }
    return spec;
}

}  // namespace mstgat
