#pragma once

#include <string>
#include <vector>

#include "actscan/common.hpp"

namespace actscan {

enum class LayerKind { SelfAttnLinear, CrossAttnLinear, OtherLinear, Conv };

const char* layer_kind_name(LayerKind kind);
bool is_linear_kind(LayerKind kind);

// Raw output of one registered layer. Linear-kind records carry an N x d
// shape; conv-kind records carry D x H x W.
struct TraceRecord {
  int layer_id = 0;
  std::string name;
  LayerKind kind = LayerKind::OtherLinear;
  std::vector<int> shape;
  std::vector<double> values;

  size_t element_count() const { return values.size(); }
};

struct ActivationTrace {
  std::vector<TraceRecord> records;

  size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

// Checks that two traces come from the same registry (ids, kinds, shapes).
void require_aligned(const ActivationTrace& a, const ActivationTrace& b);

// CSV rows: layer id, kind, flattened index, value.
void write_trace_csv(const ActivationTrace& trace, const std::string& path,
                     const std::string& header_meta);

}  // namespace actscan
