#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace promptrl {

// Stable 64-bit hashing (FNV-1a + splitmix64 finalizer). Used wherever a value
// must be reproducible across runs and platforms; std::hash gives no such
// guarantee.
uint64_t fnv1a64(std::string_view data, uint64_t state = 0xcbf29ce484222325ull);
uint64_t mix64(uint64_t x);

/// Uniform double in [0, 1) from the top 53 bits of the generator output.
double uniform01(std::mt19937_64& rng);

/// Unbiased uniform integer in [0, n) via rejection sampling.
uint64_t bounded_rand(std::mt19937_64& rng, uint64_t n);

/// Fisher-Yates shuffle driven by bounded_rand, stable across standard libraries.
template <typename T>
void seeded_shuffle(std::vector<T>& values, std::mt19937_64& rng) {
  for (size_t i = values.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(bounded_rand(rng, i));
    std::swap(values[i - 1], values[j]);
  }
}

std::string to_lower(std::string text);
std::string trim(std::string_view text);

/// Lowercased alphanumeric word tokens, everything else treated as separator.
std::vector<std::string> split_words(std::string_view text);

size_t count_occurrences(std::string_view text, std::string_view needle);
bool replace_first(std::string& text, std::string_view from, std::string_view to);
void replace_all(std::string& text, std::string_view from, std::string_view to);

/// Case-insensitive search; returns npos when absent.
size_t ifind(std::string_view haystack, std::string_view needle, size_t start = 0);

/// Splits "1. foo\n2. bar" style numbered lists into item bodies; an item
/// runs until the next numbered line. Unnumbered leading text is skipped.
std::vector<std::string> split_numbered_items(const std::string& text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);
/// Write to a sibling temp file, then rename into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Runs fn(0..n-1) across at most `jobs` threads; jobs <= 1 stays on the caller
/// thread. The first exception thrown by any worker is rethrown after join.
void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn);

}  // namespace promptrl
