#pragma once

#include <span>
#include <string>
#include <vector>

namespace mstgat {

struct Confusion {
    long tp = 0;
    long fp = 0;
    long fn = 0;
    long tn = 0;
};

struct DetectionMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    Confusion confusion;
};

Confusion confusion(std::span<const int> predicted, std::span<const int> labels);

// Zero denominators yield 0 rather than an error.
DetectionMetrics precision_recall_f1(std::span<const int> predicted, std::span<const int> labels);
double f1_score(double precision, double recall);

// Area under the ROC curve via the Mann-Whitney statistic (ties count 1/2).
// Throws DataError when only one class is present.
double auc(std::span<const double> scores, std::span<const int> labels);

// Marks a whole labelled segment as detected once any point inside it is.
std::vector<int> point_adjust(std::span<const int> predicted, std::span<const int> labels);

// Contiguous runs of label 1 as inclusive [start, end] pairs.
std::vector<std::pair<int, int>> label_segments(std::span<const int> labels);

}  // namespace mstgat
