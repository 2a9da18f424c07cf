#include "cascade/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "cascade/error.hpp"

namespace cascade {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'K', 'P'};

void write_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

std::uint16_t read_u16(std::istream& is, const std::string& path) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) throw DataError("checkpoint truncated: " + path);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t read_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("checkpoint truncated: " + path);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

float read_f32(std::istream& is, const std::string& path) {
  const std::uint32_t bits = read_u32(is, path);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void Checkpoint::put(const std::string& name, const Tensor& t) {
  if (tensors.count(name) == 0) order.push_back(name);
  tensors[name] = t;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw DataError("checkpoint missing entry: " + name);
  return it->second;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  write_u32(os, ckpt.version);
  write_u32(os, ckpt.channels);
  write_u32(os, ckpt.samples);
  write_u32(os, ckpt.filters);
  write_u32(os, static_cast<std::uint32_t>(ckpt.order.size()));
  for (const auto& name : ckpt.order) {
    const Tensor& t = ckpt.tensors.at(name);
    if (name.size() > 0xffff) throw DataError("checkpoint entry name too long: " + name);
    write_u16(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (int a = 0; a < t.rank(); ++a) write_u32(os, static_cast<std::uint32_t>(t.dim(a)));
    for (std::int64_t i = 0; i < t.size(); ++i) write_f32(os, static_cast<float>(t[i]));
  }
  if (!os) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("bad checkpoint magic: " + path);
  }
  Checkpoint ckpt;
  ckpt.version = read_u32(is, path);
  if (ckpt.version != 1) throw DataError("unsupported checkpoint version " + std::to_string(ckpt.version));
  ckpt.channels = read_u32(is, path);
  ckpt.samples = read_u32(is, path);
  ckpt.filters = read_u32(is, path);
  const std::uint32_t count = read_u32(is, path);
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint16_t len = read_u16(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw DataError("checkpoint truncated: " + path);
    const std::uint32_t rank = read_u32(is, path);
    if (rank > 8) throw DataError("checkpoint entry rank too large: " + path);
    std::vector<int> shape(rank);
    for (std::uint32_t a = 0; a < rank; ++a) shape[a] = static_cast<int>(read_u32(is, path));
    Tensor t(shape);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(read_f32(is, path));
    ckpt.put(name, t);
  }
  return ckpt;
}

}  // namespace cascade
