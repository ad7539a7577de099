#pragma once

#include "actscan/common.hpp"
#include "actscan/prompt.hpp"

namespace actscan {

// Deterministic toy text encoder: a seeded embedding table followed by one
// fixed linear mixing transform. Frozen after construction.
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(int vocab_size, int dim, uint64_t seed);

  // Embedding matrix of shape Len x dim, one row per token.
  Mat encode(const Prompt& p, CallCounters* counters = nullptr) const;

  int dim() const { return dim_; }
  int vocab_size() const { return table_.rows; }
  uint64_t seed() const { return seed_; }

  const Mat& table() const { return table_; }
  const Mat& mixing() const { return mixing_; }

  // Reconstructs an encoder from stored weights (checkpoint load path).
  static TextEncoder from_weights(Mat table, Mat mixing, uint64_t seed);

 private:
  void rebuild_effective();

  Mat table_;      // vocab_size x dim
  Mat mixing_;     // dim x dim
  Mat effective_;  // vocab_size x dim, row i = mixing * table row i
  int dim_ = 0;
  uint64_t seed_ = 0;
};

// Euclidean distance over all entries of two equal-shape embeddings.
double embedding_distance(const Mat& a, const Mat& b);

// Prompt-level distance; encodes both prompts. Requires equal lengths.
double text_distance(const TextEncoder& enc, const Prompt& a, const Prompt& b,
                     CallCounters* counters = nullptr);

}  // namespace actscan
