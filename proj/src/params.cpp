#include "arta/params.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace arta {

namespace {

constexpr std::array<char, 8> kMagic{'A', 'R', 'T', 'A', 'P', 'R', 'M', '\0'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 33;

}  // namespace

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParameterSet::get_mut(const std::string& name) {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : arrays_) n += t.size();
  return n;
}

Var Binder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const Tensor& value = params_.get(name);
  const Var v = trainable_ ? tape_.parameter(value) : tape_.constant(value);
  bound_.emplace(name, v);
  return v;
}

ParameterSet Binder::gradients() const {
  ParameterSet out;
  for (const auto& [name, value] : params_) {
    auto it = bound_.find(name);
    out.set(name, it == bound_.end() ? Tensor(value.shape(), 0.0) : tape_.grad(it->second));
  }
  return out;
}

namespace binio {

namespace {

template <class U>
U swap_bytes(U v) {
  U out{};
  auto* src = reinterpret_cast<const unsigned char*>(&v);
  auto* dst = reinterpret_cast<unsigned char*>(&out);
  for (std::size_t i = 0; i < sizeof v; ++i) dst[i] = src[sizeof v - 1 - i];
  return out;
}

template <class U>
void put_le(std::ostream& os, U v) {
  if constexpr (std::endian::native == std::endian::big) v = swap_bytes(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class U>
U get_le(std::istream& is) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw InputError("binary container truncated");
  if constexpr (std::endian::native == std::endian::big) v = swap_bytes(v);
  return v;
}

}  // namespace

void put_u32(std::ostream& os, std::uint32_t v) { put_le(os, v); }
void put_u64(std::ostream& os, std::uint64_t v) { put_le(os, v); }
void put_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }
std::uint32_t get_u32(std::istream& is) { return get_le<std::uint32_t>(is); }
std::uint64_t get_u64(std::istream& is) { return get_le<std::uint64_t>(is); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_le<std::uint64_t>(is)); }

void put_tensor(std::ostream& os, const Tensor& t) {
  put_u32(os, static_cast<std::uint32_t>(t.shape().size()));
  for (std::size_t e : t.shape()) put_u64(os, e);
  for (double v : t.data()) put_f64(os, v);
}

Tensor get_tensor(std::istream& is) {
  const std::uint32_t rank = get_u32(is);
  if (rank > 8) throw InputError("tensor rank " + std::to_string(rank) + " is implausible");
  std::vector<std::size_t> shape(rank);
  std::uint64_t n = 1;
  for (auto& e : shape) {
    e = get_u64(is);
    n *= e;
    if (n > kMaxElements) throw InputError("tensor too large");
  }
  std::vector<double> data(n);
  for (auto& v : data) v = get_f64(is);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace binio

void write_parameters(std::ostream& os, const ParameterSet& params, std::uint64_t config_digest) {
  os.write(kMagic.data(), kMagic.size());
  binio::put_u32(os, kParamFormatVersion);
  binio::put_u64(os, config_digest);
  binio::put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    binio::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    binio::put_tensor(os, t);
  }
}

ParameterSet read_parameters(std::istream& is, std::uint64_t expected_digest,
                             std::uint64_t* stored_digest) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic)
    throw InputError("not a parameter container (bad magic)");
  const std::uint32_t version = binio::get_u32(is);
  if (version != kParamFormatVersion)
    throw InputError("unsupported parameter container version " + std::to_string(version));
  const std::uint64_t digest = binio::get_u64(is);
  if (stored_digest) *stored_digest = digest;
  if (expected_digest != 0 && digest != expected_digest)
    throw InputError("parameter container was written for a different config");
  const std::uint32_t count = binio::get_u32(is);
  ParameterSet out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = binio::get_u32(is);
    if (len > 4096) throw InputError("parameter name too long");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw InputError("binary container truncated");
    out.set(name, binio::get_tensor(is));
  }
  return out;
}

void save_parameters(const std::string& path, const ParameterSet& params, std::uint64_t config_digest) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write " + path);
  write_parameters(os, params, config_digest);
  if (!os) throw InputError("failed writing " + path);
}

ParameterSet load_parameters(const std::string& path, std::uint64_t expected_digest) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path);
  return read_parameters(is, expected_digest);
}

}  // namespace arta
