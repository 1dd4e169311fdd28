#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mstgat {

inline constexpr std::string_view kToolName = "mstgat";
inline constexpr std::string_view kToolVersion = "0.1.0";

// Row-major throughout; per-node and per-node-per-timestep rows are contiguous.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vec = Eigen::VectorXd;
using AdjMat = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Rng = std::mt19937_64;

// Error categories map one-to-one onto CLI exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const { return 1; }
};

class UsageError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 2; }
};

class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 3; }
};

class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 4; }
};

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 1469598103934665603ULL);
std::string hex64(std::uint64_t v);

// Derives an independent stream seed from a base seed and a purpose tag.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

// Glorot-uniform fill for a fan_in x fan_out weight matrix.
void glorot_uniform(Mat& m, Rng& rng);
void uniform_fill(Mat& m, double lo, double hi, Rng& rng);
void normal_fill(Mat& m, Rng& rng);

inline Mat relu(const Mat& x) { return x.cwiseMax(0.0); }

// Sets grad to zero where pre <= 0.
inline void relu_backward_inplace(Mat& grad, const Mat& pre)
{
    grad = (pre.array() > 0.0).select(grad, 0.0);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool all_finite(const Mat& m);

// Keeps large per-batch temporaries on the heap instead of fresh mappings.
// No-op outside glibc; safe to call repeatedly.
void tune_allocator();

}  // namespace mstgat
