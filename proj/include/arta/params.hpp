#pragma once

// Named parameter arrays and their binary container.
//
// Container layout (all integers little-endian):
//   magic    8 bytes  "ARTAPRM\0"
//   version  u32      kParamFormatVersion
//   digest   u64      config digest the parameters were built for
//   count    u32      number of arrays
//   per array:
//     name_len u32, name bytes (UTF-8, no terminator)
//     rank u32, extents u64 × rank
//     values f64 × product(extents)

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>

#include "arta/autodiff.hpp"

namespace arta {

inline constexpr std::uint32_t kParamFormatVersion = 1;

class ParameterSet {
 public:
  void set(const std::string& name, Tensor value) { arrays_[name] = std::move(value); }
  const Tensor& get(const std::string& name) const;
  Tensor& get_mut(const std::string& name);
  bool contains(const std::string& name) const { return arrays_.count(name) != 0; }
  std::size_t size() const { return arrays_.size(); }
  std::size_t scalar_count() const;

  auto begin() const { return arrays_.begin(); }
  auto end() const { return arrays_.end(); }
  auto begin() { return arrays_.begin(); }
  auto end() { return arrays_.end(); }

  bool operator==(const ParameterSet&) const = default;

 private:
  std::map<std::string, Tensor> arrays_;
};

void write_parameters(std::ostream& os, const ParameterSet& params, std::uint64_t config_digest);
// Throws InputError on a malformed stream, or when `expected_digest` is
// non-zero and differs from the stored one.
ParameterSet read_parameters(std::istream& is, std::uint64_t expected_digest = 0,
                             std::uint64_t* stored_digest = nullptr);
void save_parameters(const std::string& path, const ParameterSet& params, std::uint64_t config_digest);
ParameterSet load_parameters(const std::string& path, std::uint64_t expected_digest = 0);

// Lazily places parameters on a tape, once per name, for one forward pass.
class Binder {
 public:
  Binder(Tape& tape, const ParameterSet& params, bool trainable = true)
      : tape_(tape), params_(params), trainable_(trainable) {}

  Var operator()(const std::string& name);
  Tape& tape() { return tape_; }
  const ParameterSet& params() const { return params_; }

  // Gradient for every parameter after tape().backward(); unbound ones are zero.
  ParameterSet gradients() const;

 private:
  Tape& tape_;
  const ParameterSet& params_;
  bool trainable_;
  std::unordered_map<std::string, Var> bound_;
};

// Little-endian primitives shared by the binary containers.
namespace binio {
void put_u32(std::ostream& os, std::uint32_t v);
void put_u64(std::ostream& os, std::uint64_t v);
void put_f64(std::ostream& os, double v);
std::uint32_t get_u32(std::istream& is);
std::uint64_t get_u64(std::istream& is);
double get_f64(std::istream& is);
void put_tensor(std::ostream& os, const Tensor& t);
Tensor get_tensor(std::istream& is);
}  // namespace binio

}  // namespace arta
