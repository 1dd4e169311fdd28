#pragma once

#include "mstgat/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace mstgat {

enum class Split { Train, Test };

// N named univariate series over T timestamps. Modality ids are 1-based.
struct TimeSeriesDataset {
    std::vector<std::string> names;
    Mat values;  // N x T
    std::vector<int> modality;
    std::optional<std::vector<int>> labels;
    Split split = Split::Train;

    int series() const { return static_cast<int>(values.rows()); }
    int length() const { return static_cast<int>(values.cols()); }
    int modalities() const;

    // Throws DataError when an invariant is broken.
    void validate() const;

    // Returns a copy with columns [begin, end).
    TimeSeriesDataset slice(int begin, int end) const;
};

struct NormStats {
    std::vector<double> offset;  // train minimum
    std::vector<double> scale;   // train range, 1 for constant series
};

struct NormalizeResult {
    TimeSeriesDataset train;
    TimeSeriesDataset test;
    NormStats stats;
    std::vector<std::string> warnings;
};

struct WindowBatch {
    Mat window;                     // N x w
    std::optional<Vec> next_value;  // x at t_end + 1
    int t_end = 0;                  // 0-based column index of the last column
};

inline constexpr double kTestClipLow = -1.0;
inline constexpr double kTestClipHigh = 2.0;

TimeSeriesDataset load_dataset(const std::filesystem::path& data_path,
                               const std::filesystem::path& modality_path,
                               const std::optional<std::filesystem::path>& labels_path = std::nullopt);

// Reads only the CSV matrix; modalities are left empty for the caller to fill.
TimeSeriesDataset load_values_csv(const std::filesystem::path& data_path);
std::vector<int> load_modalities(const std::filesystem::path& modality_path,
                                 const std::vector<std::string>& names);
std::vector<int> load_labels(const std::filesystem::path& labels_path, int length);

void write_values_csv(const std::filesystem::path& path, const TimeSeriesDataset& ds, const std::string& header_comment);
void write_modalities_json(const std::filesystem::path& path, const TimeSeriesDataset& ds);
void write_labels_csv(const std::filesystem::path& path, const std::vector<int>& labels, const std::string& header_comment);

// Min-max scaling fitted on train only; test is clipped to [-1, 2] afterwards.
NormalizeResult normalize(const TimeSeriesDataset& train, const TimeSeriesDataset& test);
NormStats fit_norm(const TimeSeriesDataset& train, std::vector<std::string>* warnings = nullptr);
TimeSeriesDataset apply_norm(const TimeSeriesDataset& ds, const NormStats& stats, bool clip);
TimeSeriesDataset denormalize(const TimeSeriesDataset& ds, const NormStats& stats);

// Windows end at columns w-1, w-1+stride, ... (0-based).
std::vector<WindowBatch> make_windows(const TimeSeriesDataset& ds, int w, int stride);
int window_count(int length, int w, int stride);

enum AnomalyKind : unsigned {
    kSpike = 1u << 0,
    kStuck = 1u << 1,
    kDecorrelation = 1u << 2,
    kAllKinds = kSpike | kStuck | kDecorrelation,
};

std::string to_string(AnomalyKind kind);

struct AnomalyInterval {
    int start = 0;  // inclusive, test-split column
    int end = 0;    // inclusive
    AnomalyKind kind = kSpike;
    int series = 0;
};

struct SynthSpec {
    int n_series = 10;
    int n_modalities = 3;
    int train_length = 4000;
    int test_length = 2000;
    double anomaly_fraction = 0.05;
    std::uint64_t seed = 7;
    unsigned kinds = kAllKinds;
    double noise = 0.01;  // individual noise std relative to unit driver amplitude
};

struct SynthResult {
    TimeSeriesDataset train;
    TimeSeriesDataset test;
    std::vector<AnomalyInterval> anomalies;
};

// Deterministic given its arguments, seed included. Train and test are one
// continuous process split at train_length; only test carries anomalies.
SynthResult synthesize(const SynthSpec& spec);
SynthResult synthesize(int n_series, int n_modalities, int length, double anomaly_fraction, std::uint64_t seed);

SynthSpec parse_synth_spec(const std::string& text);

}  // namespace mstgat
