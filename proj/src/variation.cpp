#include "actscan/variation.hpp"

#include <cmath>

namespace actscan {

bool LayerSelection::selects(int layer_index, int layer_count, LayerKind kind) const {
  int third = (layer_count + 2) / 3;
  switch (preset) {
    case Preset::AllLayers:
      return true;
    case Preset::AttentionOnly:
      return kind == LayerKind::SelfAttnLinear || kind == LayerKind::CrossAttnLinear;
    case Preset::ConvOnly:
      return kind == LayerKind::Conv;
    case Preset::DownBlk:
      return layer_index < third;
    case Preset::MidBlk:
      return layer_index >= third && layer_index < 2 * third;
    case Preset::UpBlk:
      return layer_index >= 2 * third;
  }
  return false;
}

std::string LayerSelection::name() const {
  switch (preset) {
    case Preset::AllLayers: return "all";
    case Preset::AttentionOnly: return "attention";
    case Preset::ConvOnly: return "conv";
    case Preset::DownBlk: return "down";
    case Preset::MidBlk: return "mid";
    case Preset::UpBlk: return "up";
  }
  return "all";
}

LayerSelection LayerSelection::parse(const std::string& name) {
  LayerSelection sel;
  if (name == "all") sel.preset = Preset::AllLayers;
  else if (name == "attention") sel.preset = Preset::AttentionOnly;
  else if (name == "conv") sel.preset = Preset::ConvOnly;
  else if (name == "down") sel.preset = Preset::DownBlk;
  else if (name == "mid") sel.preset = Preset::MidBlk;
  else if (name == "up") sel.preset = Preset::UpBlk;
  else throw Error("unknown layer selection '" + name + "'");
  return sel;
}

double delta_linear(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw ShapeMismatchError("delta_linear: shapes differ");
  }
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double delta_conv(const std::vector<double>& a, const std::vector<double>& b,
                  int channels, int height, int width) {
  size_t expect = static_cast<size_t>(channels) * height * width;
  if (a.size() != expect || b.size() != expect || expect == 0) {
    throw ShapeMismatchError("delta_conv: shapes differ");
  }
  double spatial = static_cast<double>(height) * width;
  double s = 0.0;
  for (int c = 0; c < channels; ++c) {
    double ma = 0.0, mb = 0.0;
    size_t base = static_cast<size_t>(c) * height * width;
    for (size_t i = 0; i < static_cast<size_t>(height) * width; ++i) {
      ma += a[base + i];
      mb += b[base + i];
    }
    s += std::abs(ma / spatial - mb / spatial);
  }
  return s / static_cast<double>(channels);
}

double delta_model(const ActivationTrace& a, const ActivationTrace& b,
                   const LayerSelection& sel) {
  require_aligned(a, b);
  int count = static_cast<int>(a.size());
  double sum = 0.0;
  bool any = false;
  for (int i = 0; i < count; ++i) {
    const auto& ra = a.records[i];
    const auto& rb = b.records[i];
    if (!sel.selects(i, count, ra.kind)) continue;
    any = true;
    if (ra.kind == LayerKind::Conv) {
      sum += delta_conv(ra.values, rb.values, ra.shape[0], ra.shape[1], ra.shape[2]);
    } else {
      sum += delta_linear(ra.values, rb.values);
    }
  }
  if (!any) throw EmptySelectionError("delta_model: selection matches no layers");
  return sum;
}

}  // namespace actscan
