#include "actscan/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

namespace actscan {

namespace {

using nlohmann::json;

json arch_to_json(const ArchConfig& a) {
  return json{{"data_dim", a.data_dim},
              {"text_dim", a.text_dim},
              {"time_dim", a.time_dim},
              {"grid", a.grid},
              {"attn_dim", a.attn_dim},
              {"conv_channels", a.conv_channels},
              {"n_self_attn", a.n_self_attn},
              {"n_cross_attn", a.n_cross_attn},
              {"n_conv", a.n_conv},
              {"n_other_linear", a.n_other_linear},
              {"time_steps", a.time_steps}};
}

ArchConfig arch_from_json(const json& j) {
  ArchConfig a;
  a.data_dim = j.at("data_dim").get<int>();
  a.text_dim = j.at("text_dim").get<int>();
  a.time_dim = j.at("time_dim").get<int>();
  a.grid = j.at("grid").get<int>();
  a.attn_dim = j.at("attn_dim").get<int>();
  a.conv_channels = j.at("conv_channels").get<int>();
  a.n_self_attn = j.at("n_self_attn").get<int>();
  a.n_cross_attn = j.at("n_cross_attn").get<int>();
  a.n_conv = j.at("n_conv").get<int>();
  a.n_other_linear = j.at("n_other_linear").get<int>();
  a.time_steps = j.at("time_steps").get<int>();
  return a;
}

json mat_to_json(const Mat& m) {
  return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.v}};
}

Mat mat_from_json(const json& j) {
  Mat m(j.at("rows").get<int>(), j.at("cols").get<int>());
  m.v = j.at("data").get<std::vector<double>>();
  if (m.v.size() != static_cast<size_t>(m.rows) * m.cols) {
    throw ShapeMismatchError("checkpoint: matrix data size mismatch");
  }
  return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json layers = json::array();
  for (const auto& d : ckpt.model.registry()) {
    layers.push_back(json{{"name", d.name},
                          {"kind", layer_kind_name(d.kind)},
                          {"param_count", d.param_count}});
  }
  std::vector<int> stop_ids(ckpt.vocab.stopword_ids.begin(), ckpt.vocab.stopword_ids.end());
  std::sort(stop_ids.begin(), stop_ids.end());
  json j{{"format_version", kCheckpointFormatVersion},
         {"arch", arch_to_json(ckpt.model.arch())},
         {"seed", ckpt.model.seed()},
         {"theta", ckpt.model.params()},
         {"data_mean", ckpt.model.data_mean()},
         {"layers", layers},
         {"encoder",
          json{{"seed", ckpt.encoder.seed()},
               {"table", mat_to_json(ckpt.encoder.table())},
               {"mixing", mat_to_json(ckpt.encoder.mixing())}}},
         {"vocab", json{{"tokens", ckpt.vocab.tokens},
                        {"pad_id", ckpt.vocab.pad_id},
                        {"stopword_ids", stop_ids}}}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  json j;
  in >> j;
  int version = j.at("format_version").get<int>();
  if (version != kCheckpointFormatVersion) {
    throw IoError("checkpoint: unsupported format version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.model = ToyDenoiser::from_state(
      arch_from_json(j.at("arch")), j.at("seed").get<uint64_t>(),
      j.at("theta").get<std::vector<double>>(),
      j.at("data_mean").get<std::vector<double>>());
  const auto& je = j.at("encoder");
  ckpt.encoder = TextEncoder::from_weights(mat_from_json(je.at("table")),
                                           mat_from_json(je.at("mixing")),
                                           je.at("seed").get<uint64_t>());
  ckpt.vocab.tokens = j.at("vocab").at("tokens").get<std::vector<std::string>>();
  ckpt.vocab.pad_id = j.at("vocab").at("pad_id").get<int>();
  for (int id : j.at("vocab").at("stopword_ids").get<std::vector<int>>()) {
    ckpt.vocab.stopword_ids.insert(id);
  }
  ckpt.vocab.finalize();
  return ckpt;
}

}  // namespace actscan
