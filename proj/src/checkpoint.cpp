#include "aio/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "aio/errors.hpp"

namespace aio::ckpt {

namespace {
constexpr char kMagic[8] = {'A', 'I', 'O', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}
}  // namespace

void Archive::put(const std::string& name, const ad::Tensor& t) {
  for (const auto& [n, x] : arrays)
    if (n == name) throw ContractError("archive: duplicate array " + name);
  arrays.emplace_back(name, t);
}

bool Archive::has(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return true;
  return false;
}

const ad::Tensor& Archive::get(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return t;
  throw ContractError("archive: missing array " + name);
}

void save_archive(const Archive& a, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DependencyError("cannot write checkpoint: " + path);
  os.write(kMagic, 8);
  const std::string meta = a.meta.dump();
  write_u64(os, meta.size());
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  write_u64(os, a.arrays.size());
  for (const auto& [name, t] : a.arrays) {
    write_u64(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(os, t.shape().size());
    for (int d : t.shape()) write_u64(os, static_cast<std::uint64_t>(d));
    static_assert(sizeof(double) == 8);
    os.write(reinterpret_cast<const char*>(t.values().data()),
             static_cast<std::streamsize>(t.values().size() * 8));
  }
  if (!os) throw DependencyError("write failed: " + path);
}

Archive load_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DependencyError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw DependencyError("not a checkpoint archive: " + path);
  Archive a;
  const std::uint64_t meta_len = read_u64(is);
  std::string meta(meta_len, '\0');
  is.read(meta.data(), static_cast<std::streamsize>(meta_len));
  a.meta = nlohmann::json::parse(meta);
  const std::uint64_t count = read_u64(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = read_u64(is);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    const std::uint64_t ndim = read_u64(is);
    ad::Shape shape(ndim);
    for (auto& d : shape) d = static_cast<int>(read_u64(is));
    std::vector<double> data(static_cast<size_t>(ad::shape_numel(shape)));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * 8));
    if (!is) throw DependencyError("truncated checkpoint: " + path);
    a.arrays.emplace_back(name, ad::Tensor::from(shape, std::move(data)));
  }
  return a;
}

}  // namespace aio::ckpt
