#include "arta/layers.hpp"

#include <cmath>

namespace arta::layers {

void init_linear(ParameterSet& ps, const std::string& prefix, int in, int out, Rng& rng) {
  Tensor w = Tensor::matrix(static_cast<std::size_t>(in), static_cast<std::size_t>(out));
  const double std = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : w.data()) v = std * rng.normal();
  ps.set(prefix + ".w", std::move(w));
  ps.set(prefix + ".b", Tensor({static_cast<std::size_t>(out)}, 0.0));
}

Var linear(Binder& b, const std::string& prefix, Var x) {
  return ops::linear(b.tape(), x, b(prefix + ".w"), b(prefix + ".b"));
}

void init_layer_norm(ParameterSet& ps, const std::string& prefix, int dim) {
  ps.set(prefix + ".g", Tensor({static_cast<std::size_t>(dim)}, 1.0));
  ps.set(prefix + ".b", Tensor({static_cast<std::size_t>(dim)}, 0.0));
}

Var layer_norm(Binder& b, const std::string& prefix, Var x, double eps) {
  return ops::layer_norm(b.tape(), x, b(prefix + ".g"), b(prefix + ".b"), eps);
}

void init_mlp(ParameterSet& ps, const std::string& prefix, int in, int hidden, int out, Rng& rng) {
  init_linear(ps, prefix + ".fc1", in, hidden, rng);
  init_linear(ps, prefix + ".fc2", hidden, out, rng);
}

Var mlp(Binder& b, const std::string& prefix, Var x) {
  Var h = ops::gelu(b.tape(), linear(b, prefix + ".fc1", x));
  return linear(b, prefix + ".fc2", h);
}

void init_embedding(ParameterSet& ps, const std::string& name, int rows, int dim, Rng& rng) {
  Tensor t = Tensor::matrix(static_cast<std::size_t>(rows), static_cast<std::size_t>(dim));
  for (double& v : t.data()) v = 0.02 * rng.normal();
  ps.set(name, std::move(t));
}

}  // namespace arta::layers
