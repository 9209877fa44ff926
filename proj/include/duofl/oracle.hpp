#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "duofl/rng.hpp"
#include "duofl/vecmath.hpp"

namespace duofl::oracle {

// Shared FLTrust weighting: TS_i = max(0, cos_i),
// w_i = (TS_i / sum_j TS_j) * (norm_std / norm_i). Clients with zero norm
// carry cos = 0 and drop out; if every trust score is zero the round is a
// no-trust round and all weights are zero. The protocol's S1 uses exactly
// this function, so oracle-vs-protocol weight equality is structural.
struct TrustWeights {
  std::vector<double> trust_scores;
  std::vector<double> weights;
  bool no_trust = false;
};

inline double cosine_from(double inner, double norm_a, double norm_b) {
  if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
  return std::clamp(inner / (norm_a * norm_b), -1.0, 1.0);
}

inline TrustWeights fltrust_weights(std::span<const double> cosines,
                                    std::span<const double> norms, double norm_std) {
  if (cosines.size() != norms.size())
    throw std::invalid_argument("fltrust_weights: size mismatch");
  if (cosines.empty()) throw std::invalid_argument("fltrust_weights: no clients");
  TrustWeights out;
  out.trust_scores.resize(cosines.size());
  out.weights.assign(cosines.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < cosines.size(); ++i) {
    out.trust_scores[i] = std::max(0.0, cosines[i]);
    total += out.trust_scores[i];
  }
  if (total == 0.0) {
    out.no_trust = true;
    return out;
  }
  for (std::size_t i = 0; i < cosines.size(); ++i) {
    if (out.trust_scores[i] > 0.0 && norms[i] > 0.0)
      out.weights[i] = out.trust_scores[i] / total * (norm_std / norms[i]);
  }
  return out;
}

struct FltrustResult {
  std::vector<double> aggregate;
  std::vector<double> weights;
  std::vector<double> cosines;
  std::vector<double> norms;
  bool no_trust = false;
};

inline FltrustResult fltrust_plain(std::span<const std::vector<double>> gradients,
                                   std::span<const double> g_standard) {
  if (gradients.empty()) throw std::invalid_argument("fltrust: no gradients");
  double norm_std = vec::norm(g_standard);
  if (norm_std == 0.0) throw std::invalid_argument("fltrust: degenerate reference");
  FltrustResult res;
  res.cosines.reserve(gradients.size());
  res.norms.reserve(gradients.size());
  for (const auto& g : gradients) {
    double n = vec::norm(g);
    res.norms.push_back(n);
    res.cosines.push_back(cosine_from(vec::dot(g, g_standard), n, norm_std));
  }
  TrustWeights tw = fltrust_weights(res.cosines, res.norms, norm_std);
  res.weights = tw.weights;
  res.no_trust = tw.no_trust;
  res.aggregate.assign(g_standard.size(), 0.0);
  for (std::size_t i = 0; i < gradients.size(); ++i)
    if (res.weights[i] != 0.0) vec::add_scaled(res.aggregate, gradients[i], res.weights[i]);
  return res;
}

inline std::vector<double> fedavg_plain(std::span<const std::vector<double>> gradients) {
  if (gradients.empty()) throw std::invalid_argument("fedavg: no gradients");
  std::vector<double> mean(gradients[0].size(), 0.0);
  for (const auto& g : gradients)
    vec::add_scaled(mean, g, 1.0 / static_cast<double>(gradients.size()));
  return mean;
}

// Krum: select the gradient whose summed squared distance to its n-f-2
// nearest peers is smallest.
inline std::vector<double> krum_plain(std::span<const std::vector<double>> gradients,
                                      std::size_t f_count) {
  std::size_t n = gradients.size();
  if (n <= 2 * f_count + 2)
    throw std::invalid_argument("krum: need n > 2f + 2");
  std::size_t keep = n - f_count - 2;
  double best_score = std::numeric_limits<double>::infinity();
  std::size_t best = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> dists;
    dists.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) dists.push_back(vec::squared_distance(gradients[i], gradients[j]));
    std::sort(dists.begin(), dists.end());
    double score = 0.0;
    for (std::size_t t = 0; t < keep && t < dists.size(); ++t) score += dists[t];
    if (score < best_score) {
      best_score = score;
      best = i;
    }
  }
  return gradients[best];
}

inline std::vector<double> trimmed_mean_plain(
    std::span<const std::vector<double>> gradients, std::size_t beta) {
  std::size_t n = gradients.size();
  if (n == 0 || 2 * beta >= n)
    throw std::invalid_argument("trimmed_mean: need 2*beta < n");
  std::size_t d = gradients[0].size();
  std::vector<double> out(d, 0.0);
  std::vector<double> column(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) column[i] = gradients[i][j];
    std::sort(column.begin(), column.end());
    double s = 0.0;
    for (std::size_t i = beta; i < n - beta; ++i) s += column[i];
    out[j] = s / static_cast<double>(n - 2 * beta);
  }
  return out;
}

// The constructive piece of the indistinguishability argument: a vector
// psi with psi . g_standard = rho and ||psi|| = norm_target, random in the
// orthogonal complement. Infeasible (rho, norm) pairs are rejected.
inline std::vector<double> construct_equivalent_gradient(
    double rho, double norm_target, std::span<const double> g_standard,
    std::uint64_t seed) {
  std::size_t d = g_standard.size();
  if (d < 2) throw std::invalid_argument("psi: need d >= 2");
  double std_norm_sq = vec::dot(g_standard, g_standard);
  if (std_norm_sq == 0.0) throw std::invalid_argument("psi: degenerate reference");
  if (norm_target < 0.0) throw std::invalid_argument("psi: negative norm target");
  double residual_sq = norm_target * norm_target - rho * rho / std_norm_sq;
  if (rho * rho > norm_target * norm_target * std_norm_sq)
    throw std::invalid_argument("psi: (rho, norm) violates Cauchy-Schwarz");
  if (residual_sq < 0.0) residual_sq = 0.0;

  Rng rng = Rng::from_u64(seed, /*stream_id=*/0x70736900);  // "psi"
  std::vector<double> u(d);
  std::vector<double> u_perp(d);
  double perp_norm = 0.0;
  do {
    for (auto& x : u) x = rng.gaussian();
    double coeff = vec::dot(u, g_standard) / std_norm_sq;
    for (std::size_t j = 0; j < d; ++j) u_perp[j] = u[j] - coeff * g_standard[j];
    perp_norm = vec::norm(u_perp);
  } while (perp_norm < 1e-12);  // u parallel to the reference: resample

  std::vector<double> psi(d);
  double along = rho / std_norm_sq;
  double across = std::sqrt(residual_sq) / perp_norm;
  for (std::size_t j = 0; j < d; ++j)
    psi[j] = along * g_standard[j] + across * u_perp[j];
  return psi;
}

}  // namespace duofl::oracle
