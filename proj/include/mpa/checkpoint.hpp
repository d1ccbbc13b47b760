#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mpa/scorer.hpp"

namespace mpa {

// Serialized training state. Binary little-endian layout:
//   magic "MPAK", u32 format version,
//   parameter records: (u32 name length > 0, UTF-8 name, u32 rank,
//                       u32 dims[rank], f32 data),
//   u32 0 terminator,
//   u32 velocity record count, velocity records (same shape),
//   u64 epoch, (u32 length, bytes) rng state, (u32 length, bytes)
//   config fingerprint.
// Save/load round-trips byte-exactly.
struct Checkpoint {
  std::vector<Tensor> params;
  std::vector<Tensor> velocities;
  std::uint64_t epoch = 0;
  std::string rng_state;
  std::string fingerprint;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Captures scorer + optimizer into a checkpoint / restores them.
Checkpoint snapshot(const Scorer& scorer, const OptimizerState& opt,
                    std::uint64_t epoch, const std::string& rng_state);
void restore(const Checkpoint& ckpt, Scorer& scorer, OptimizerState* opt);

}  // namespace mpa
