#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "duofl/rng.hpp"
#include "duofl/vecmath.hpp"

namespace duofl::learning {

struct Dataset {
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  std::vector<double> features;  // row-major, samples x n_features
  std::vector<int> labels;
  std::uint64_t seed = 0;

  std::size_t size() const { return labels.size(); }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * n_features, n_features);
  }
};

// Gaussian class clusters: class means are `separation`-scaled random unit
// vectors, per-coordinate noise has std `noise_std`. The means live on
// their own stream keyed by `means_seed`, so train/test/trusted splits
// drawn with different sample seeds share one distribution.
inline Dataset generate_synthetic(std::uint64_t seed, std::size_t samples,
                                  std::size_t features, std::size_t classes,
                                  double separation, double noise_std = 1.0,
                                  std::optional<std::uint64_t> means_seed = {}) {
  if (classes < 2) throw std::invalid_argument("synthetic: need at least 2 classes");
  if (samples == 0 || features == 0)
    throw std::invalid_argument("synthetic: sizes must be positive");
  Rng means_rng = Rng::from_u64(means_seed.value_or(seed), /*stream_id=*/0x6d65616e);
  std::vector<std::vector<double>> means(classes, std::vector<double>(features));
  for (auto& m : means) {
    for (auto& x : m) x = means_rng.gaussian();
    double n = vec::norm(m);
    if (n == 0.0) n = 1.0;
    for (auto& x : m) x *= separation / n;
  }
  Rng rng = Rng::from_u64(seed, /*stream_id=*/0x64617461);  // "data"
  Dataset ds;
  ds.n_features = features;
  ds.n_classes = classes;
  ds.seed = seed;
  ds.features.resize(samples * features);
  ds.labels.resize(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    int label = static_cast<int>(rng.below(classes));
    ds.labels[i] = label;
    for (std::size_t j = 0; j < features; ++j)
      ds.features[i * features + j] = means[label][j] + noise_std * rng.gaussian();
  }
  return ds;
}

inline Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.n_features = ds.n_features;
  out.n_classes = ds.n_classes;
  out.seed = ds.seed;
  out.features.reserve(indices.size() * ds.n_features);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    auto r = ds.row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(ds.labels[i]);
  }
  return out;
}

struct PartitionScheme {
  enum class Kind { iid, label_skew } kind = Kind::iid;
  double alpha = 0.5;  // Dirichlet concentration for label_skew

  static PartitionScheme iid() { return {Kind::iid, 0.0}; }
  static PartitionScheme label_skew(double alpha) { return {Kind::label_skew, alpha}; }
};

// Disjoint cover of the dataset. iid deals a seeded shuffle round-robin;
// label-skew splits each class among clients by Dirichlet(alpha) shares.
inline std::vector<Dataset> partition(const Dataset& ds, std::size_t n,
                                      const PartitionScheme& scheme,
                                      std::uint64_t seed) {
  if (n == 0 || n > ds.size())
    throw std::invalid_argument("partition: need 1 <= n <= samples");
  Rng rng = Rng::from_u64(seed, /*stream_id=*/0x70617274);  // "part"
  std::vector<std::vector<std::size_t>> assignment(n);
  if (scheme.kind == PartitionScheme::Kind::iid) {
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t idx = 0; idx < order.size(); ++idx)
      assignment[idx % n].push_back(order[idx]);
  } else {
    std::vector<std::vector<std::size_t>> by_class(ds.n_classes);
    for (std::size_t i = 0; i < ds.size(); ++i)
      by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    for (auto& members : by_class) {
      for (std::size_t i = members.size(); i > 1; --i)
        std::swap(members[i - 1], members[rng.below(i)]);
      std::vector<double> shares = rng.dirichlet(scheme.alpha, n);
      // Largest-remainder allocation of |members| slots to the n shares.
      std::vector<std::size_t> counts(n, 0);
      std::vector<std::pair<double, std::size_t>> remainders(n);
      std::size_t assigned = 0;
      for (std::size_t c = 0; c < n; ++c) {
        double want = shares[c] * static_cast<double>(members.size());
        counts[c] = static_cast<std::size_t>(want);
        assigned += counts[c];
        remainders[c] = {want - static_cast<double>(counts[c]), c};
      }
      std::sort(remainders.rbegin(), remainders.rend());
      for (std::size_t extra = 0; assigned < members.size(); ++extra, ++assigned)
        ++counts[remainders[extra % n].second];
      std::size_t cursor = 0;
      for (std::size_t c = 0; c < n; ++c)
        for (std::size_t t = 0; t < counts[c]; ++t)
          assignment[c].push_back(members[cursor++]);
    }
  }
  // Severe skew can starve a client entirely; every shard gets at least
  // one sample so all clients can train.
  for (std::size_t c = 0; c < n; ++c) {
    if (!assignment[c].empty()) continue;
    auto donor = std::max_element(
        assignment.begin(), assignment.end(),
        [](const auto& a, const auto& b) { return a.size() < b.size(); });
    assignment[c].push_back(donor->back());
    donor->pop_back();
  }
  std::vector<Dataset> shards;
  shards.reserve(n);
  for (auto& idx : assignment) {
    std::sort(idx.begin(), idx.end());
    shards.push_back(subset(ds, idx));
  }
  return shards;
}

// Softmax regression, optionally with one tanh hidden layer.
// Parameter layout: hidden == 0 -> [W (features x classes), b (classes)];
// hidden > 0 -> [W1 (features x h), b1 (h), W2 (h x classes), b2 (classes)].
struct ModelSpec {
  std::size_t features = 0;
  std::size_t classes = 0;
  std::size_t hidden = 0;

  std::size_t dim() const {
    if (hidden == 0) return (features + 1) * classes;
    return (features + 1) * hidden + (hidden + 1) * classes;
  }
};

struct Model {
  ModelSpec spec;
  std::vector<double> w;

  static Model zeros(const ModelSpec& spec) { return Model{spec, std::vector<double>(spec.dim(), 0.0)}; }

  static Model random_init(const ModelSpec& spec, std::uint64_t seed, double scale = 0.01) {
    Model m = zeros(spec);
    Rng rng = Rng::from_u64(seed, /*stream_id=*/0x696e6974);  // "init"
    for (auto& x : m.w) x = scale * rng.gaussian();
    return m;
  }
};

namespace detail {

inline void softmax_inplace(std::vector<double>& logits) {
  double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (auto& v : logits) {
    v = std::exp(v - mx);
    total += v;
  }
  for (auto& v : logits) v /= total;
}

struct Forward {
  std::vector<double> hidden_act;  // tanh outputs (empty for linear model)
  std::vector<double> probs;
};

inline Forward forward(const Model& m, std::span<const double> x) {
  const auto& s = m.spec;
  Forward f;
  if (s.hidden == 0) {
    f.probs.assign(s.classes, 0.0);
    const double* W = m.w.data();
    const double* b = m.w.data() + s.features * s.classes;
    for (std::size_t c = 0; c < s.classes; ++c) {
      double z = b[c];
      for (std::size_t j = 0; j < s.features; ++j) z += W[j * s.classes + c] * x[j];
      f.probs[c] = z;
    }
    softmax_inplace(f.probs);
    return f;
  }
  const double* W1 = m.w.data();
  const double* b1 = W1 + s.features * s.hidden;
  const double* W2 = b1 + s.hidden;
  const double* b2 = W2 + s.hidden * s.classes;
  f.hidden_act.assign(s.hidden, 0.0);
  for (std::size_t h = 0; h < s.hidden; ++h) {
    double z = b1[h];
    for (std::size_t j = 0; j < s.features; ++j) z += W1[j * s.hidden + h] * x[j];
    f.hidden_act[h] = std::tanh(z);
  }
  f.probs.assign(s.classes, 0.0);
  for (std::size_t c = 0; c < s.classes; ++c) {
    double z = b2[c];
    for (std::size_t h = 0; h < s.hidden; ++h) z += W2[h * s.classes + c] * f.hidden_act[h];
    f.probs[c] = z;
  }
  softmax_inplace(f.probs);
  return f;
}

// dL/dw for one sample of mean cross-entropy, accumulated with weight.
inline void accumulate_gradient(const Model& m, std::span<const double> x, int y,
                                double weight, std::vector<double>& grad) {
  const auto& s = m.spec;
  Forward f = forward(m, x);
  std::vector<double> delta = f.probs;  // p - onehot(y)
  delta[static_cast<std::size_t>(y)] -= 1.0;
  if (s.hidden == 0) {
    double* gW = grad.data();
    double* gb = grad.data() + s.features * s.classes;
    for (std::size_t c = 0; c < s.classes; ++c) {
      double dc = weight * delta[c];
      for (std::size_t j = 0; j < s.features; ++j) gW[j * s.classes + c] += dc * x[j];
      gb[c] += dc;
    }
    return;
  }
  const double* W2 = m.w.data() + s.features * s.hidden + s.hidden;
  double* gW1 = grad.data();
  double* gb1 = gW1 + s.features * s.hidden;
  double* gW2 = gb1 + s.hidden;
  double* gb2 = gW2 + s.hidden * s.classes;
  std::vector<double> dhidden(s.hidden, 0.0);
  for (std::size_t c = 0; c < s.classes; ++c) {
    double dc = weight * delta[c];
    for (std::size_t h = 0; h < s.hidden; ++h) {
      gW2[h * s.classes + c] += dc * f.hidden_act[h];
      dhidden[h] += dc * W2[h * s.classes + c];
    }
    gb2[c] += dc;
  }
  for (std::size_t h = 0; h < s.hidden; ++h) {
    double dz = dhidden[h] * (1.0 - f.hidden_act[h] * f.hidden_act[h]);
    for (std::size_t j = 0; j < s.features; ++j) gW1[j * s.hidden + h] += dz * x[j];
    gb1[h] += dz;
  }
}

}  // namespace detail

// Mean cross-entropy gradient over a seeded batch drawn without
// replacement (the whole shard when batch_size >= shard size).
inline std::vector<double> compute_gradient(const Model& m, const Dataset& shard,
                                            std::size_t batch_size,
                                            std::uint64_t batch_seed) {
  if (shard.size() == 0) throw std::invalid_argument("gradient: empty shard");
  if (m.spec.features != shard.n_features)
    throw std::invalid_argument("gradient: feature dimension mismatch");
  std::size_t take = std::min(batch_size, shard.size());
  if (take == 0) throw std::invalid_argument("gradient: zero batch");
  std::vector<std::size_t> idx(shard.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = Rng::from_u64(batch_seed, /*stream_id=*/0x62617463);  // "batc"
  for (std::size_t i = 0; i < take; ++i) {
    std::size_t j = i + rng.below(shard.size() - i);
    std::swap(idx[i], idx[j]);
  }
  // canonical accumulation order: the same sample set always sums the same
  std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
  std::vector<double> grad(m.spec.dim(), 0.0);
  double weight = 1.0 / static_cast<double>(take);
  for (std::size_t i = 0; i < take; ++i)
    detail::accumulate_gradient(m, shard.row(idx[i]), shard.labels[idx[i]], weight, grad);
  if (!vec::all_finite(grad))
    throw std::runtime_error("gradient: non-finite result (model diverged?)");
  return grad;
}

// Full-batch gradient (reference gradient on a trusted dataset uses this).
inline std::vector<double> full_gradient(const Model& m, const Dataset& ds) {
  return compute_gradient(m, ds, ds.size(), /*batch_seed=*/0);
}

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

inline Evaluation evaluate(const Model& m, const Dataset& test) {
  if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto f = detail::forward(m, test.row(i));
    std::size_t argmax = static_cast<std::size_t>(
        std::max_element(f.probs.begin(), f.probs.end()) - f.probs.begin());
    if (argmax == static_cast<std::size_t>(test.labels[i])) ++correct;
    double p = std::max(f.probs[static_cast<std::size_t>(test.labels[i])], 1e-300);
    loss -= std::log(p);
  }
  return {static_cast<double>(correct) / static_cast<double>(test.size()),
          loss / static_cast<double>(test.size())};
}

inline double batch_loss(const Model& m, const Dataset& ds,
                         std::span<const std::size_t> indices) {
  double loss = 0.0;
  for (std::size_t i : indices) {
    auto f = detail::forward(m, ds.row(i));
    double p = std::max(f.probs[static_cast<std::size_t>(ds.labels[i])], 1e-300);
    loss -= std::log(p);
  }
  return loss / static_cast<double>(indices.size());
}

// Binary dataset file: header (samples, features, classes, seed as 8-byte
// big-endian) + row-major features as IEEE doubles (8-byte BE) + labels
// (4-byte BE each).
inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("dataset: cannot open " + path + " for writing");
  auto put_u64 = [&](std::uint64_t v) {
    for (int i = 7; i >= 0; --i) out.put(static_cast<char>(v >> (8 * i)));
  };
  put_u64(ds.size());
  put_u64(ds.n_features);
  put_u64(ds.n_classes);
  put_u64(ds.seed);
  for (double x : ds.features) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    put_u64(bits);
  }
  for (int label : ds.labels) {
    std::uint32_t v = static_cast<std::uint32_t>(label);
    for (int i = 3; i >= 0; --i) out.put(static_cast<char>(v >> (8 * i)));
  }
  if (!out) throw std::runtime_error("dataset: write failed for " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("dataset: cannot open " + path);
  auto get_u64 = [&]() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      int c = in.get();
      if (c == EOF) throw std::runtime_error("dataset: truncated file " + path);
      v = (v << 8) | static_cast<std::uint8_t>(c);
    }
    return v;
  };
  Dataset ds;
  std::uint64_t samples = get_u64();
  ds.n_features = get_u64();
  ds.n_classes = get_u64();
  ds.seed = get_u64();
  ds.features.resize(samples * ds.n_features);
  for (auto& x : ds.features) {
    std::uint64_t bits = get_u64();
    std::memcpy(&x, &bits, 8);
  }
  ds.labels.resize(samples);
  for (auto& label : ds.labels) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      int c = in.get();
      if (c == EOF) throw std::runtime_error("dataset: truncated file " + path);
      v = (v << 8) | static_cast<std::uint8_t>(c);
    }
    label = static_cast<int>(v);
  }
  return ds;
}

}  // namespace duofl::learning
