#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "duofl/rng.hpp"
#include "duofl/vecmath.hpp"

namespace duofl::attacks {

enum class AttackKind {
  none,
  signflip,
  labelflip,
  gaussian,
  scaling,
  minmax,
  minsum,
};

inline const char* attack_name(AttackKind k) {
  switch (k) {
    case AttackKind::none: return "none";
    case AttackKind::signflip: return "signflip";
    case AttackKind::labelflip: return "labelflip";
    case AttackKind::gaussian: return "gaussian";
    case AttackKind::scaling: return "scaling";
    case AttackKind::minmax: return "minmax";
    case AttackKind::minsum: return "minsum";
  }
  return "unknown";
}

inline AttackKind attack_from_name(const std::string& name) {
  for (AttackKind k : {AttackKind::none, AttackKind::signflip, AttackKind::labelflip,
                       AttackKind::gaussian, AttackKind::scaling, AttackKind::minmax,
                       AttackKind::minsum}) {
    if (name == attack_name(k)) return k;
  }
  throw std::invalid_argument("unknown attack kind: " + name);
}

// Which clients are Byzantine and how they poison. The attacker set is
// drawn once from the attack seed and stays fixed across rounds.
struct AttackPlan {
  AttackKind kind = AttackKind::none;
  double byzantine_fraction = 0.0;
  double scale_c = 6.0;  // scaling attack factor
  std::uint64_t seed = 0;
  std::set<std::uint32_t> attacker_ids;

  bool is_attacker(std::uint32_t id) const { return attacker_ids.count(id) > 0; }
};

inline AttackPlan make_attack_plan(AttackKind kind, double fraction, std::size_t n,
                                   std::uint64_t seed, double scale_c = 6.0) {
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("attack plan: fraction must be in [0, 1]");
  AttackPlan plan;
  plan.kind = kind;
  plan.byzantine_fraction = fraction;
  plan.scale_c = scale_c;
  plan.seed = seed;
  std::size_t count =
      kind == AttackKind::none
          ? 0
          : static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  Rng rng = Rng::from_u64(seed, /*stream_id=*/0x61746b70);  // "atkp"
  std::vector<std::uint32_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = i + rng.below(n - i);
    std::swap(ids[i], ids[j]);
  }
  plan.attacker_ids.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(count));
  return plan;
}

inline std::vector<double> sign_flip(std::span<const double> g) {
  std::vector<double> out(g.begin(), g.end());
  for (auto& x : out) x = -x;
  return out;
}

// y -> C-1-y; the attacker then trains normally on the corrupted labels.
inline std::vector<int> label_flip(std::span<const int> labels, int classes) {
  std::vector<int> out(labels.begin(), labels.end());
  for (auto& y : out) {
    if (y < 0 || y >= classes) throw std::invalid_argument("label_flip: label out of range");
    y = classes - 1 - y;
  }
  return out;
}

// Adds N(0, (2*sigma)^2) noise per coordinate, sigma being the empirical
// std of the gradient's own coordinates.
inline std::vector<double> gaussian_attack(std::span<const double> g, std::uint64_t seed) {
  if (g.empty()) throw std::invalid_argument("gaussian_attack: empty gradient");
  double mean = 0.0;
  for (double x : g) mean += x;
  mean /= static_cast<double>(g.size());
  double var = 0.0;
  for (double x : g) var += (x - mean) * (x - mean);
  var /= static_cast<double>(g.size());
  double sigma = std::sqrt(var);
  std::vector<double> out(g.begin(), g.end());
  if (sigma == 0.0) return out;
  Rng rng = Rng::from_u64(seed, /*stream_id=*/0x6e6f6973);  // "nois"
  for (auto& x : out) x += 2.0 * sigma * rng.gaussian();
  return out;
}

inline std::vector<double> scaling_attack(std::span<const double> g, double c = 6.0) {
  if (c <= 0.0) throw std::invalid_argument("scaling_attack: c must be positive");
  return vec::scaled(g, c);
}

namespace detail {

// mal = mu + gamma * p with p = -mu/||mu||; gamma maximized by doubling
// then 50 bisection steps at 1e-5 tolerance, subject to `fits(mal)`.
template <typename Fits>
inline std::vector<double> crafted_gradient(std::span<const std::vector<double>> benign,
                                            Fits fits) {
  std::size_t d = benign[0].size();
  std::vector<double> mu(d, 0.0);
  for (const auto& g : benign) vec::add_scaled(mu, g, 1.0 / static_cast<double>(benign.size()));
  double mu_norm = vec::norm(mu);
  if (mu_norm == 0.0) return mu;
  std::vector<double> p = vec::scaled(mu, -1.0 / mu_norm);
  auto at = [&](double gamma) {
    std::vector<double> mal = mu;
    vec::add_scaled(mal, p, gamma);
    return mal;
  };
  double lo = 0.0, hi = 1.0;
  int doublings = 0;
  while (fits(at(hi)) && doublings < 80) {
    lo = hi;
    hi *= 2.0;
    ++doublings;
  }
  for (int iter = 0; iter < 50 && hi - lo > 1e-5; ++iter) {
    double mid = 0.5 * (lo + hi);
    if (fits(at(mid)))
      lo = mid;
    else
      hi = mid;
  }
  return at(lo);
}

}  // namespace detail

// Largest deviation whose max distance to any colluder stays within the
// colluders' own max pairwise distance.
inline std::vector<double> min_max(std::span<const std::vector<double>> benign,
                                   std::uint64_t /*seed*/ = 0) {
  if (benign.size() < 2)
    throw std::invalid_argument("min_max: need at least 2 colluding gradients");
  double threshold = 0.0;
  for (std::size_t i = 0; i < benign.size(); ++i)
    for (std::size_t j = i + 1; j < benign.size(); ++j)
      threshold = std::max(threshold, vec::distance(benign[i], benign[j]));
  return detail::crafted_gradient(benign, [&](const std::vector<double>& mal) {
    double worst = 0.0;
    for (const auto& g : benign) worst = std::max(worst, vec::distance(mal, g));
    return worst <= threshold;
  });
}

// Largest deviation whose summed squared distance to the colluders stays
// within the worst benign point's own sum.
inline std::vector<double> min_sum(std::span<const std::vector<double>> benign,
                                   std::uint64_t /*seed*/ = 0) {
  if (benign.size() < 2)
    throw std::invalid_argument("min_sum: need at least 2 colluding gradients");
  double threshold = 0.0;
  for (const auto& gi : benign) {
    double total = 0.0;
    for (const auto& gj : benign) total += vec::squared_distance(gi, gj);
    threshold = std::max(threshold, total);
  }
  return detail::crafted_gradient(benign, [&](const std::vector<double>& mal) {
    double total = 0.0;
    for (const auto& g : benign) total += vec::squared_distance(mal, g);
    return total <= threshold;
  });
}

}  // namespace duofl::attacks
