#include "sketchfill/checkpoint.hpp"

#include <cstdio>
#include <iomanip>
#include <sstream>

#include "sketchfill/binio.hpp"

namespace sketchfill {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

std::vector<unsigned char> encode_checkpoint(const TensorTable& table) {
  ByteWriter w;
  w.bytes("FSCK");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(table.size()));
  for (const auto& [name, rec] : table) {
    if (static_cast<std::int64_t>(rec.data.size()) != ad::numel(rec.dims))
      throw InvalidArgument("checkpoint entry '" + name + "': data length does not match dims");
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(rec.dims.size()));
    for (auto d : rec.dims) w.u32(static_cast<std::uint32_t>(d));
    for (float v : rec.data) w.f32(v);
  }
  return w.buffer();
}

TensorTable decode_checkpoint(std::span<const unsigned char> bytes) {
  ByteReader r(bytes);
  if (r.bytes(4, "magic") != "FSCK") throw FormatError("bad checkpoint magic", 0);
  const auto version = r.u32("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  const auto count = r.u32("entry count");
  TensorTable table;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.u32("name length");
    std::string name = r.bytes(name_len, "name");
    const auto rank = r.u32("rank");
    if (rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank), r.offset() - 4);
    TensorRecord rec;
    for (std::uint32_t k = 0; k < rank; ++k) rec.dims.push_back(r.u32("dims"));
    const auto n = static_cast<std::size_t>(ad::numel(rec.dims));
    if (n * 4 > r.remaining()) throw FormatError("truncated tensor data for '" + name + "'", r.offset());
    rec.data.resize(n);
    r.f32s(rec.data, "tensor data");
    table.emplace(std::move(name), std::move(rec));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint", r.offset());
  return table;
}

void write_checkpoint(const std::string& path, const TensorTable& table) {
  write_binary_file_atomic(path, encode_checkpoint(table));
}

TensorTable read_checkpoint(const std::string& path) { return decode_checkpoint(read_binary_file(path)); }

std::string checkpoint_hash(const std::string& path) {
  const auto bytes = read_binary_file(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

}  // namespace sketchfill
