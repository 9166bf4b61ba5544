#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "core/tensor.h"

namespace adatta {

// Versioned checkpoint container.
//
// Byte layout (little-endian):
//   magic   8 bytes  "ADCKPT01"
//   kind    u32 length + bytes        model kind tag ("tts", "pllm", "motion")
//   config_hash u64                   FNV-1a over the canonical config text
//   step    u64                       training step counter
//   count   u32                       number of named tensors
//   per tensor:
//     name  u32 length + bytes
//     ndim  u32, dims i64 x ndim
//     data  f64 x numel
//
// Model weights, the VQ codebook, optimizer moments, and miscellaneous
// counters are all stored as named tensors in the same table.
struct Checkpoint {
  std::string kind;
  uint64_t config_hash = 0;
  uint64_t step = 0;
  std::map<std::string, Tensor> tensors;

  bool has(const std::string& name) const { return tensors.count(name) > 0; }
  const Tensor& get(const std::string& name) const;
  double scalar(const std::string& name) const;
  void put_scalar(const std::string& name, double value);
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

// Refuses kind/config-hash mismatches unless force is set. expected_hash 0
// skips the hash check (used by inspection tools).
Checkpoint load_checkpoint(const std::string& path, const std::string& expected_kind,
                           uint64_t expected_hash, bool force = false);

uint64_t fnv1a64(const std::string& text);

}  // namespace adatta
