#pragma once

#include <string>

#include "actscan/encoder.hpp"
#include "actscan/model.hpp"
#include "actscan/vocab.hpp"

namespace actscan {

// Self-contained model artifact: denoiser weights, the frozen text encoder,
// and the vocabulary it was built against. Stored as JSON; doubles
// round-trip exactly, so a reloaded model reproduces forward outputs
// bitwise on the writing platform.
struct Checkpoint {
  ToyDenoiser model;
  TextEncoder encoder;
  Vocabulary vocab;
};

constexpr int kCheckpointFormatVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace actscan
