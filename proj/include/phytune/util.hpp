#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "phytune/tensor.hpp"

namespace phytune {

// 64-bit FNV-1a. Stable across platforms, used for content keys and seeds.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// Seeded stream with portable uniform/normal transforms; std distributions
// differ between standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    double uniform();  // [0, 1)
    double normal();
    int uniform_int(int lo, int hi_exclusive);
    Tensor normal_tensor(Shape shape, double stddev = 1.0);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

namespace text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string collapse_whitespace(std::string_view s);
// Lowercased, trimmed, whitespace-collapsed form used for fixture keys and hashing.
std::string canonical(std::string_view s);
std::size_t word_count(std::string_view s);
bool contains_ci(std::string_view haystack, std::string_view needle);
bool iequals(std::string_view a, std::string_view b);
// Lowercase alphanumeric runs.
std::vector<std::string> words(std::string_view s);
std::string replace_all(std::string s, std::string_view from, std::string_view to);

}  // namespace text

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace phytune
