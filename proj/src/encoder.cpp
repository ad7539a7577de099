#include "actscan/encoder.hpp"

namespace actscan {

TextEncoder::TextEncoder(int vocab_size, int dim, uint64_t seed)
    : table_(vocab_size, dim), mixing_(dim, dim), dim_(dim), seed_(seed) {
  Rng rng(seed);
  double table_scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (auto& x : table_.v) x = rng.normal() * table_scale;
  double mix_scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (auto& x : mixing_.v) x = rng.normal() * mix_scale;
  rebuild_effective();
}

TextEncoder TextEncoder::from_weights(Mat table, Mat mixing, uint64_t seed) {
  if (table.cols != mixing.rows || mixing.rows != mixing.cols) {
    throw ShapeMismatchError("encoder weights: inconsistent shapes");
  }
  TextEncoder enc;
  enc.table_ = std::move(table);
  enc.mixing_ = std::move(mixing);
  enc.dim_ = enc.mixing_.rows;
  enc.seed_ = seed;
  enc.rebuild_effective();
  return enc;
}

void TextEncoder::rebuild_effective() {
  effective_ = Mat(table_.rows, dim_);
  for (int i = 0; i < table_.rows; ++i) {
    for (int r = 0; r < dim_; ++r) {
      double s = 0.0;
      for (int c = 0; c < dim_; ++c) s += mixing_(r, c) * table_(i, c);
      effective_(i, r) = s;
    }
  }
}

Mat TextEncoder::encode(const Prompt& p, CallCounters* counters) const {
  if (counters) counters->encoder_calls += 1;
  Mat out(p.length(), dim_);
  for (int i = 0; i < p.length(); ++i) {
    int id = p.token_ids[i];
    if (id < 0 || id >= table_.rows) {
      throw IndexOutOfRangeError("encode: token id out of range");
    }
    for (int c = 0; c < dim_; ++c) out(i, c) = effective_(id, c);
  }
  return out;
}

double embedding_distance(const Mat& a, const Mat& b) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw LengthMismatchError("embedding_distance: shapes differ");
  }
  double s = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    double d = a.v[i] - b.v[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double text_distance(const TextEncoder& enc, const Prompt& a, const Prompt& b,
                     CallCounters* counters) {
  if (a.length() != b.length()) {
    throw LengthMismatchError("text_distance: prompt lengths differ");
  }
  return embedding_distance(enc.encode(a, counters), enc.encode(b, counters));
}

}  // namespace actscan
