#include "scriptbmi/rng.hpp"

#include <cmath>
#include <numbers>

namespace scriptbmi {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer; full-avalanche 64-bit mix.
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t master_seed, std::string_view purpose_tag)
    : master_seed_(master_seed), purpose_tag_(purpose_tag) {
  key_ = mix64(master_seed_ ^ mix64(fnv1a(purpose_tag_)));
}

RngStream RngStream::derive(std::uint64_t item_index) const {
  return derive(std::string_view(std::to_string(item_index)));
}

RngStream RngStream::derive(std::string_view sub_tag) const {
  std::string tag = purpose_tag_;
  tag += '/';
  tag += sub_tag;
  return RngStream(master_seed_, tag);
}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double RngStream::next_double() {
  // Top 53 bits to a double in [0, 1).
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_uniform(double lo, double hi) {
  if (!(lo < hi)) {
    throw RangeError("uniform range requires lo < hi");
  }
  return lo + (hi - lo) * next_double();
}

double RngStream::next_normal(double mean, double stddev) {
  if (stddev < 0.0) {
    throw RangeError("normal stddev must be non-negative");
  }
  if (stddev == 0.0) {
    return mean;
  }
  // Box-Muller, no spare caching: two uniforms per draw keeps the stream a
  // pure function of the counter.
  const double u1 = 1.0 - next_double();  // (0, 1]
  const double u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor rng_uniform(RngStream& stream, std::vector<std::size_t> shape, double lo, double hi) {
  if (!(lo < hi)) {
    throw RangeError("rng_uniform requires lo < hi");
  }
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = stream.next_uniform(lo, hi);
  }
  return out;
}

Tensor rng_normal(RngStream& stream, std::vector<std::size_t> shape, double mean, double stddev) {
  if (stddev < 0.0) {
    throw RangeError("rng_normal requires stddev >= 0");
  }
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = stream.next_normal(mean, stddev);
  }
  return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream& stream) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = stream.next_u64() % i;
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace scriptbmi
