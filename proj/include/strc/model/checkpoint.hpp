#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "strc/model/model.hpp"

namespace strc {

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container: "STRC", u32 version, u32 count, then per tensor
/// (u32 name length, name bytes, u32 rank, u64 dims...), then every buffer
/// as little-endian float32 in table order.
std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Copies of the referenced tensors, names prefixed with `prefix`.
std::vector<NamedTensor> snapshot(const std::vector<ParamRef<float>>& refs, std::string_view prefix);
/// Writes stored values back into `refs`. Throws FormatError when a name is
/// missing or a shape differs.
void restore(const std::vector<NamedTensor>& stored, const std::vector<ParamRef<float>>& refs, std::string_view prefix);

/// Plain-text `key=value` sidecar.
using Metadata = std::map<std::string, std::string>;
std::string format_metadata(const Metadata& meta);
Metadata parse_metadata(const std::string& text);
void write_metadata(const std::filesystem::path& path, const Metadata& meta);
Metadata read_metadata(const std::filesystem::path& path);

}  // namespace strc
