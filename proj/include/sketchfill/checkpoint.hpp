#pragma once

#include <map>
#include <string>
#include <vector>

#include "sketchfill/autodiff.hpp"

namespace sketchfill {

struct TensorRecord {
  ad::Shape dims;
  std::vector<float> data;

  bool operator==(const TensorRecord&) const = default;
};

/// Named tensor table, ordered by name.
using TensorTable = std::map<std::string, TensorRecord>;

// "FSCK", u32 version, u32 count, then per entry: u32 name length, name bytes,
// u32 rank, u32 dims..., f32 data. Little-endian.
std::vector<unsigned char> encode_checkpoint(const TensorTable& table);
TensorTable decode_checkpoint(std::span<const unsigned char> bytes);

void write_checkpoint(const std::string& path, const TensorTable& table);
TensorTable read_checkpoint(const std::string& path);

/// 64-bit FNV-1a of the checkpoint file bytes, hex encoded.
std::string checkpoint_hash(const std::string& path);

}  // namespace sketchfill
