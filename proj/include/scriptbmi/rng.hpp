#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "scriptbmi/tensor.hpp"

namespace scriptbmi {

// Counter-based random stream. The draw sequence is a pure function of
// (master_seed, purpose_tag, counter), identical on every platform; no
// standard-library distributions are involved. Sub-streams derived with
// distinct tags or item indices are statistically independent, which makes
// per-image work order-independent and parallel-safe.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::string_view purpose_tag);

  // Child stream tagged "<purpose>/<item_index>", counter reset to zero.
  RngStream derive(std::uint64_t item_index) const;
  RngStream derive(std::string_view sub_tag) const;

  std::uint64_t next_u64();
  double next_double();                         // [0, 1)
  double next_uniform(double lo, double hi);    // [lo, hi)
  double next_normal(double mean, double stddev);

  std::uint64_t master_seed() const { return master_seed_; }
  const std::string& purpose_tag() const { return purpose_tag_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t master_seed_ = 0;
  std::string purpose_tag_;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

// i.i.d. draws in [lo, hi); lo must be strictly below hi.
Tensor rng_uniform(RngStream& stream, std::vector<std::size_t> shape, double lo, double hi);

// i.i.d. Gaussian draws; stddev zero yields the constant mean.
Tensor rng_normal(RngStream& stream, std::vector<std::size_t> shape, double mean, double stddev);

// Deterministic Fisher-Yates shuffle of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream& stream);

}  // namespace scriptbmi
