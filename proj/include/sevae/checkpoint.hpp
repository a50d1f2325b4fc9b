#pragma once

// Binary checkpoint container. Layout, all integers little-endian:
//
//   magic      8 bytes  "SEVAECKP"
//   version    u32      currently 1
//   spec_hash  u64      ModelSpec::hash() of the saved model
//   spec_len   u32      followed by spec_len bytes of "key=value\n" lines
//   count      u32      number of arrays
//   per array: u32 name_len, name bytes, u32 rank, rank x u64 dims,
//              prod(dims) x f64 values (IEEE-754 binary64)
//
// Arrays appear in parameter registration order.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>

#include "sevae/model.hpp"

namespace sevae {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const Model& model);
void save_checkpoint(const Model& model, const std::filesystem::path& path);

// The spec stored in a checkpoint, verified against its hash.
ModelSpec read_checkpoint_spec(std::istream& in);
ModelSpec read_checkpoint_spec(const std::filesystem::path& path);

// Overwrites every parameter of `model`. CheckpointError on bad magic,
// version mismatch, truncation, spec hash mismatch, missing parameters, or
// shape mismatch.
void read_checkpoint_into(std::istream& in, Model& model);
void load_checkpoint_into(const std::filesystem::path& path, Model& model);

// Rebuilds the model from the stored spec and loads its parameters.
std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path);

}  // namespace sevae
