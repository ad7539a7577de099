#include "actscan/trace.hpp"

#include <cstdio>
#include <fstream>

namespace actscan {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::SelfAttnLinear: return "self_attn_linear";
    case LayerKind::CrossAttnLinear: return "cross_attn_linear";
    case LayerKind::OtherLinear: return "other_linear";
    case LayerKind::Conv: return "conv";
  }
  return "unknown";
}

bool is_linear_kind(LayerKind kind) { return kind != LayerKind::Conv; }

void require_aligned(const ActivationTrace& a, const ActivationTrace& b) {
  if (a.size() != b.size()) {
    throw ShapeMismatchError("traces: different layer counts");
  }
  for (size_t i = 0; i < a.size(); ++i) {
    const auto& ra = a.records[i];
    const auto& rb = b.records[i];
    if (ra.layer_id != rb.layer_id || ra.kind != rb.kind || ra.shape != rb.shape ||
        ra.values.size() != rb.values.size()) {
      throw ShapeMismatchError("traces: layer " + std::to_string(i) + " not aligned");
    }
  }
}

void write_trace_csv(const ActivationTrace& trace, const std::string& path,
                     const std::string& header_meta) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace csv: " + path);
  out << "# " << header_meta << '\n';
  out << "layer_id,kind,index,value\n";
  char buf[128];
  for (const auto& r : trace.records) {
    for (size_t i = 0; i < r.values.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%d,%s,%zu,%.10g\n", r.layer_id,
                    layer_kind_name(r.kind), i, r.values[i]);
      out << buf;
    }
  }
}

}  // namespace actscan
