#pragma once

// Parameterised building blocks shared by both encoder stages. Each layer
// owns the parameters "<prefix>.w"/"<prefix>.b" (linear), "<prefix>.g"/
// "<prefix>.b" (layer norm), or "<prefix>.fc1.*"/"<prefix>.fc2.*" (MLP).

#include <string>

#include "arta/params.hpp"
#include "arta/rng.hpp"

namespace arta::layers {

// Weights ~ N(0, 1/fan_in), zero bias.
void init_linear(ParameterSet& ps, const std::string& prefix, int in, int out, Rng& rng);
Var linear(Binder& b, const std::string& prefix, Var x);

void init_layer_norm(ParameterSet& ps, const std::string& prefix, int dim);
Var layer_norm(Binder& b, const std::string& prefix, Var x, double eps);

// fc2(GELU(fc1(x)))
void init_mlp(ParameterSet& ps, const std::string& prefix, int in, int hidden, int out, Rng& rng);
Var mlp(Binder& b, const std::string& prefix, Var x);

// Table rows ~ N(0, 0.02²).
void init_embedding(ParameterSet& ps, const std::string& name, int rows, int dim, Rng& rng);

}  // namespace arta::layers
