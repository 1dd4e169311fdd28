#include "mstgat/common.hpp"

#include <cmath>
#include <cstdio>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace mstgat {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed)
{
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag)
{
    std::string key = std::to_string(seed);
    key.push_back(':');
    key.append(tag);
    return fnv1a(key);
}

void glorot_uniform(Mat& m, Rng& rng)
{
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    uniform_fill(m, -limit, limit, rng);
}

void uniform_fill(Mat& m, double lo, double hi, Rng& rng)
{
    std::uniform_real_distribution<double> dist(lo, hi);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = dist(rng);
    }
}

void normal_fill(Mat& m, Rng& rng)
{
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = dist(rng);
    }
}

bool all_finite(const Mat& m)
{
    return m.allFinite();
}

void tune_allocator()
{
#if defined(__GLIBC__)
    static const bool done = [] {
        mallopt(M_MMAP_THRESHOLD, 256 << 20);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
        return true;
    }();
    (void)done;
#endif
}

}  // namespace mstgat
