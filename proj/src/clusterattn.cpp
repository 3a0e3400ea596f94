#include "arta/clusterattn.hpp"

#include <algorithm>
#include <map>

#include "arta/layers.hpp"

namespace arta::cluster {

std::vector<std::size_t> cluster_sizes(std::size_t n, std::size_t cluster_size) {
  if (cluster_size == 0) throw ContractError("cluster_size must be at least 1");
  std::vector<std::size_t> sizes(n / cluster_size, cluster_size);
  if (n % cluster_size) sizes.push_back(n % cluster_size);
  return sizes;
}

ClusterAssignment cluster(std::span<const geom::TokenKey> keys, int cluster_size,
                          std::span<const std::int32_t> sample_of,
                          std::span<const std::uint8_t> valid) {
  if (cluster_size < 1) throw ContractError("cluster_size must be at least 1");
  const std::size_t n = keys.size();
  if (!sample_of.empty() && sample_of.size() != n)
    throw DimensionError("cluster: sample_of length differs from key count");
  if (!valid.empty() && valid.size() != n)
    throw DimensionError("cluster: valid length differs from key count");

  std::map<std::int32_t, std::vector<std::uint32_t>> by_sample;
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid.empty() && !valid[i]) continue;
    by_sample[sample_of.empty() ? 0 : sample_of[i]].push_back(static_cast<std::uint32_t>(i));
  }

  ClusterAssignment out;
  out.cluster_of.assign(n, -1);
  std::vector<std::vector<std::uint32_t>> neighbours(n);
  const std::int32_t samples = by_sample.empty() ? 0 : by_sample.rbegin()->first + 1;
  out.members.resize(static_cast<std::size_t>(std::max(samples, 0)));

  for (auto& [s, rows] : by_sample) {
    std::uint64_t comparisons = 0;
    std::sort(rows.begin(), rows.end(), [&](std::uint32_t a, std::uint32_t b) {
      ++comparisons;
      return geom::canonical_less(keys[a], keys[b]);
    });
    out.comparisons += comparisons;

    auto& groups = out.members[static_cast<std::size_t>(s)];
    std::size_t at = 0;
    for (std::size_t size : cluster_sizes(rows.size(), static_cast<std::size_t>(cluster_size))) {
      groups.emplace_back(rows.begin() + static_cast<std::ptrdiff_t>(at),
                          rows.begin() + static_cast<std::ptrdiff_t>(at + size));
      at += size;
    }
    for (std::size_t c = 0; c < groups.size(); ++c) {
      std::vector<std::uint32_t> nb;
      if (c > 0) nb.insert(nb.end(), groups[c - 1].begin(), groups[c - 1].end());
      nb.insert(nb.end(), groups[c].begin(), groups[c].end());
      if (c + 1 < groups.size()) nb.insert(nb.end(), groups[c + 1].begin(), groups[c + 1].end());
      for (std::uint32_t r : groups[c]) {
        out.cluster_of[r] = static_cast<std::int32_t>(c);
        neighbours[r] = nb;
      }
    }
  }
  for (const auto& nb : neighbours) out.neighborhoods.push(nb);
  return out;
}

void init_block(ParameterSet& ps, const BlockSpec& spec, Rng& rng) {
  const std::string& p = spec.prefix;
  layers::init_layer_norm(ps, p + ".ln1", spec.dim);
  for (const char* name : {".attn.q", ".attn.k", ".attn.v", ".attn.o"})
    layers::init_linear(ps, p + name, spec.dim, spec.dim, rng);
  if (spec.level_keys) layers::init_embedding(ps, p + ".attn.level_key", geom::kLevels, spec.dim, rng);
  layers::init_layer_norm(ps, p + ".ln2", spec.dim);
  layers::init_mlp(ps, p + ".mlp", spec.dim, spec.mlp_hidden, spec.dim, rng);
}

Var attention_block(Binder& b, const BlockSpec& spec, Var x, const Neighborhoods& nb,
                    std::span<const int> levels, std::span<const std::uint8_t> valid) {
  Tape& t = b.tape();
  if (nb.size() != t.value(x).rows())
    throw DimensionError("attention_block: one neighbourhood per row is required");
  for (std::size_t i = 0; i < nb.size(); ++i)
    if ((valid.empty() || valid[i]) && nb.of(i).empty())
      throw ContractError("attention_block: row " + std::to_string(i) + " has an empty neighbourhood");
  const std::string& p = spec.prefix;
  Var h = layers::layer_norm(b, p + ".ln1", x, spec.eps);
  Var q = layers::linear(b, p + ".attn.q", h);
  Var k = layers::linear(b, p + ".attn.k", h);
  Var v = layers::linear(b, p + ".attn.v", h);
  if (spec.level_keys) {
    if (levels.size() != t.value(x).rows())
      throw DimensionError("attention_block: one level per row is required");
    k = ops::add(t, k, ops::gather_rows(t, b(p + ".attn.level_key"),
                                        std::vector<std::int64_t>(levels.begin(), levels.end())));
  }
  Var a = ops::attention(t, q, k, v, static_cast<std::size_t>(spec.heads), nb);
  x = ops::add(t, x, layers::linear(b, p + ".attn.o", a));
  h = layers::layer_norm(b, p + ".ln2", x, spec.eps);
  return ops::add(t, x, layers::mlp(b, p + ".mlp", h));
}

}  // namespace arta::cluster
