#include "strc/model/checkpoint.hpp"

#include <cstring>
#include <sstream>
#include <unordered_map>

#include "strc/dataset/codec.hpp"

namespace strc {
namespace {

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct Reader {
  const Bytes& b;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (b.size() - pos < n) throw FormatError("checkpoint truncated at byte " + std::to_string(pos));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[pos++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[pos++]) << (8 * i);
    return v;
  }
};

}  // namespace

Bytes encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  Bytes out = {'S', 'T', 'R', 'C'};
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_u32(out, static_cast<std::uint32_t>(t.value.rank()));
    for (auto d : t.value.shape()) put_u64(out, d);
  }
  for (const auto& t : tensors)
    for (float f : t.value.data()) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(out, bits);
    }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const Bytes& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "STRC", 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  Reader r{bytes, 4};
  const auto version = r.u32();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.u32();
  std::vector<std::pair<std::string, Shape>> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.u32();
    r.need(len);
    std::string name(reinterpret_cast<const char*>(bytes.data() + r.pos), len);
    r.pos += len;
    const auto rank = r.u32();
    if (rank == 0 || rank > 8) throw FormatError("checkpoint tensor '" + name + "' has invalid rank");
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<std::size_t>(r.u64()));
    table.emplace_back(std::move(name), std::move(shape));
  }
  std::vector<NamedTensor> out;
  for (auto& [name, shape] : table) {
    Tensor<float> t(shape);
    r.need(4 * t.numel());
    for (auto& f : t.data()) {
      const std::uint32_t bits = r.u32();
      std::memcpy(&f, &bits, 4);
    }
    out.push_back({std::move(name), std::move(t)});
  }
  if (r.pos != bytes.size()) throw FormatError("checkpoint has trailing bytes");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  // Write then rename so an interrupted save never leaves a torn file.
  auto tmp = path;
  tmp += ".tmp";
  write_file(tmp, encode_checkpoint(tensors));
  std::filesystem::rename(tmp, path);
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

std::vector<NamedTensor> snapshot(const std::vector<ParamRef<float>>& refs, std::string_view prefix) {
  std::vector<NamedTensor> out;
  out.reserve(refs.size());
  for (const auto& r : refs) out.push_back({std::string(prefix) + r.name, *r.value});
  return out;
}

void restore(const std::vector<NamedTensor>& stored, const std::vector<ParamRef<float>>& refs, std::string_view prefix) {
  std::unordered_map<std::string, const Tensor<float>*> index;
  for (const auto& t : stored) index[t.name] = &t.value;
  for (const auto& r : refs) {
    const std::string key = std::string(prefix) + r.name;
    const auto it = index.find(key);
    if (it == index.end()) throw FormatError("checkpoint is missing '" + key + "'");
    if (it->second->shape() != r.value->shape()) {
      throw FormatError("checkpoint tensor '" + key + "' has shape " + shape_str(it->second->shape()) + ", expected " +
                        shape_str(r.value->shape()));
    }
    *r.value = *it->second;
  }
}

std::string format_metadata(const Metadata& meta) {
  std::string out;
  for (const auto& [k, v] : meta) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw UsageError("metadata key/value may not contain '=' or newlines: " + k);
    }
    out += k + "=" + v + "\n";
  }
  return out;
}

Metadata parse_metadata(const std::string& text) {
  Metadata meta;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("metadata line without '=': " + line);
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

void write_metadata(const std::filesystem::path& path, const Metadata& meta) {
  const auto text = format_metadata(meta);
  write_file(path, Bytes(text.begin(), text.end()));
}

Metadata read_metadata(const std::filesystem::path& path) {
  const auto b = read_file(path);
  return parse_metadata(std::string(b.begin(), b.end()));
}

}  // namespace strc
