#include "dmt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "dmt/errors.hpp"

namespace dmt {

namespace {

constexpr char kMagic[4] = {'D', 'M', 'T', '1'};
constexpr uint8_t kDtypeF32 = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf, buf + sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf, buf + sizeof(T));
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

}  // namespace

long CheckpointEntry::count() const {
  long n = 1;
  for (int d : shape) n *= d;
  return n;
}

void Checkpoint::add(std::string name, const Tensor& t) {
  CheckpointEntry e;
  e.name = std::move(name);
  e.shape = {t.rows(), t.cols()};
  e.data.reserve(t.size());
  for (double v : t.values()) e.data.push_back(float(v));
  entries.push_back(std::move(e));
}

void Checkpoint::add_raw(std::string name, std::vector<int> shape,
                         std::vector<float> data) {
  CheckpointEntry e{std::move(name), std::move(shape), std::move(data)};
  if (e.count() != long(e.data.size()))
    throw std::invalid_argument("checkpoint: data size does not match shape for " +
                                e.name);
  entries.push_back(std::move(e));
}

void Checkpoint::add_scalar(std::string name, float value) {
  add_raw(std::move(name), {1}, {value});
}

bool Checkpoint::has(std::string_view name) const {
  for (const auto& e : entries)
    if (e.name == name) return true;
  return false;
}

const CheckpointEntry& Checkpoint::at(std::string_view name) const {
  for (const auto& e : entries)
    if (e.name == name) return e;
  throw ConfigError("checkpoint: missing array '" + std::string(name) + "'");
}

float Checkpoint::scalar(std::string_view name) const {
  const auto& e = at(name);
  if (e.data.size() != 1)
    throw ConfigError("checkpoint: '" + std::string(name) + "' is not a scalar");
  return e.data[0];
}

Tensor Checkpoint::tensor(std::string_view name, bool requires_grad) const {
  const auto& e = at(name);
  int rows = e.shape.empty() ? 1 : e.shape[0];
  int cols = 1;
  for (size_t i = 1; i < e.shape.size(); ++i) cols *= e.shape[i];
  std::vector<double> vals(e.data.begin(), e.data.end());
  return Tensor::from(rows, cols, std::move(vals), requires_grad);
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("checkpoint: cannot open for writing: " + path.string());
  out.write(kMagic, 4);
  write_le<uint32_t>(out, uint32_t(entries.size()));
  for (const auto& e : entries) {
    write_le<uint32_t>(out, uint32_t(e.name.size()));
    out.write(e.name.data(), std::streamsize(e.name.size()));
    write_le<uint8_t>(out, kDtypeF32);
    write_le<uint32_t>(out, uint32_t(e.shape.size()));
    for (int d : e.shape) write_le<uint32_t>(out, uint32_t(d));
  }
  for (const auto& e : entries)
    for (float v : e.data) write_le<float>(out, v);
  if (!out) throw ConfigError("checkpoint: write failed: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ConfigError("checkpoint: bad magic in " + path.string());
  auto count = read_le<uint32_t>(in);
  Checkpoint ck;
  ck.entries.resize(count);
  for (auto& e : ck.entries) {
    auto name_len = read_le<uint32_t>(in);
    e.name.resize(name_len);
    in.read(e.name.data(), name_len);
    auto dtype = read_le<uint8_t>(in);
    if (dtype != kDtypeF32)
      throw ConfigError("checkpoint: unsupported dtype tag in " + path.string());
    auto ndim = read_le<uint32_t>(in);
    e.shape.resize(ndim);
    for (auto& d : e.shape) d = int(read_le<uint32_t>(in));
  }
  for (auto& e : ck.entries) {
    e.data.resize(e.count());
    for (auto& v : e.data) v = read_le<float>(in);
  }
  if (!in) throw ConfigError("checkpoint: truncated file: " + path.string());
  return ck;
}

}  // namespace dmt
