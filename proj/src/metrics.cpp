#include "mstgat/metrics.hpp"

#include "mstgat/common.hpp"

#include <algorithm>
#include <numeric>

namespace mstgat {

Confusion confusion(std::span<const int> predicted, std::span<const int> labels)
{
    if (predicted.size() != labels.size()) {
        throw DataError("predictions (" + std::to_string(predicted.size()) + ") and labels (" +
                        std::to_string(labels.size()) + ") differ in length");
    }
    Confusion c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool p = predicted[i] != 0;
        const bool y = labels[i] != 0;
        if (p && y) ++c.tp;
        else if (p) ++c.fp;
        else if (y) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double f1_score(double precision, double recall)
{
    const double s = precision + recall;
    return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

DetectionMetrics precision_recall_f1(std::span<const int> predicted, std::span<const int> labels)
{
    DetectionMetrics m;
    m.confusion = confusion(predicted, labels);
    const auto& c = m.confusion;
    m.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    m.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
    m.f1 = f1_score(m.precision, m.recall);
    return m;
}

double auc(std::span<const double> scores, std::span<const int> labels)
{
    if (scores.size() != labels.size()) throw DataError("auc: scores and labels differ in length");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // average ranks over tied groups
    double pos_rank_sum = 0.0;
    long n_pos = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[idx[k]] != 0) {
                pos_rank_sum += rank;
                ++n_pos;
            }
        }
        i = j;
    }
    const long n_neg = static_cast<long>(labels.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("auc: labels contain a single class");
    const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<std::pair<int, int>> label_segments(std::span<const int> labels)
{
    std::vector<std::pair<int, int>> out;
    const int n = static_cast<int>(labels.size());
    for (int i = 0; i < n;) {
        if (labels[static_cast<std::size_t>(i)] == 0) {
            ++i;
            continue;
        }
        int j = i;
        while (j + 1 < n && labels[static_cast<std::size_t>(j + 1)] != 0) ++j;
        out.emplace_back(i, j);
        i = j + 1;
    }
    return out;
}

std::vector<int> point_adjust(std::span<const int> predicted, std::span<const int> labels)
{
    if (predicted.size() != labels.size()) throw DataError("point_adjust: length mismatch");
    std::vector<int> out(predicted.begin(), predicted.end());
    for (auto& v : out) v = v != 0 ? 1 : 0;
    for (const auto& [a, b] : label_segments(labels)) {
        const bool hit = std::any_of(out.begin() + a, out.begin() + b + 1, [](int v) { return v != 0; });
        if (hit) std::fill(out.begin() + a, out.begin() + b + 1, 1);
    }
    return out;
}

}  // namespace mstgat
