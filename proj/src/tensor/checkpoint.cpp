#include "chemlm/tensor/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace chemlm::tg {

namespace {

constexpr char kMagic[5] = {'M', 'F', 'C', 'K', '1'};

template <typename T>
void write_le(std::ofstream& out, T v) {
  unsigned char buf[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  uint64_t v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 5);
  for (const auto& [name, t] : params) {
    write_le<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<uint32_t>(out, static_cast<uint32_t>(t.shape().size()));
    for (int64_t d : t.shape()) write_le<uint64_t>(out, static_cast<uint64_t>(d));
    for (float x : t.data()) {
      uint32_t bits;
      std::memcpy(&bits, &x, 4);
      write_le<uint32_t>(out, bits);
    }
  }
  if (!out) throw Error("write failure on checkpoint: " + path);
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, kMagic, 5) != 0)
    throw Error("bad checkpoint magic in " + path);
  std::vector<std::pair<std::string, Tensor>> out;
  while (true) {
    uint32_t nlen = read_le<uint32_t>(in);
    if (in.eof()) break;
    std::string name(nlen, '\0');
    in.read(name.data(), nlen);
    uint32_t rank = read_le<uint32_t>(in);
    Shape shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(read_le<uint64_t>(in));
    std::vector<float> data(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : data) {
      uint32_t bits = read_le<uint32_t>(in);
      std::memcpy(&x, &bits, 4);
    }
    if (!in) throw Error("truncated checkpoint: " + path);
    out.emplace_back(std::move(name), Tensor::from(shape, std::move(data), true));
  }
  return out;
}

}  // namespace chemlm::tg
