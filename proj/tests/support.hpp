#pragma once

// Shared oracles and helpers for the test binaries. Nothing here calls into
// the estimator or loss code it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "phytune/autograd.hpp"
#include "phytune/tensor.hpp"
#include "phytune/util.hpp"

namespace phytune::testing {

inline std::string fixture(const std::string& name) { return std::string(PHYTUNE_TEST_FIXTURES) + "/" + name; }
inline std::string golden(const std::string& name) { return std::string(PHYTUNE_TEST_GOLDEN) + "/" + name; }

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("phytune_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Brute-force expected score: plain exponentials (no max shift), summed per
// score group in a second pass.
inline double oracle_expected(const std::vector<double>& logits, const std::vector<double>& scores) {
    long double lo = std::numeric_limits<double>::infinity();
    for (double z : logits) lo = std::min<long double>(lo, z);
    std::map<double, long double> mass;
    long double total = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (std::isinf(logits[i])) continue;
        const long double w = std::exp(static_cast<long double>(logits[i]) - lo);
        mass[scores[i]] += w;
        total += w;
    }
    long double e = 0;
    for (const auto& [s, w] : mass) e += static_cast<long double>(s) * (w / total);
    return static_cast<double>(e);
}

inline double rel_err(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central finite difference of f with respect to every entry of x.
inline std::vector<double> numeric_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                            double h = 1e-5) {
    std::vector<double> g(x.size());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = f(probe);
        probe[i] = orig - h;
        const double down = f(probe);
        probe[i] = orig;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

// Relative error of two gradient vectors measured by their norms, which is
// robust to individual near-zero components.
inline double gradient_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

inline Tensor random_tensor(Rng& rng, Shape shape, double stddev = 1.0) { return rng.normal_tensor(std::move(shape), stddev); }

inline bool update_golden() {
    const char* v = std::getenv("PHYTUNE_UPDATE_GOLDEN");
    return v && *v && std::string(v) != "0";
}

// Compares `actual` with the golden file, or rewrites it when requested.
inline bool matches_golden(const std::string& name, const std::string& actual) {
    const auto path = golden(name);
    if (update_golden() || !std::filesystem::exists(path)) {
        write_file(path, actual + "\n");
        return true;
    }
    return text::trim(read_file(path)) == actual;
}

inline std::string tensor_hash(const Tensor& t) {
    std::string bytes(reinterpret_cast<const char*>(t.data().data()), t.size() * sizeof(double));
    return hex64(fnv1a64(bytes));
}

}  // namespace phytune::testing
