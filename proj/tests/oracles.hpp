#pragma once

// Brute-force reference implementations used only by tests. They work on
// plain std::set<std::uint32_t> and explicit counting loops, sharing no code
// with the library paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "evikit/evidence.hpp"

namespace oracle {

using Set = std::set<std::uint32_t>;

inline Set to_set(const evikit::TokenSet& s) {
  Set out;
  for (auto id : s) out.insert(id.position);
  return out;
}

inline evikit::TokenSet to_token_set(const Set& s) {
  return evikit::TokenSet::from_positions({s.begin(), s.end()});
}

inline std::size_t count_common(const Set& a, const Set& b) {
  std::size_t n = 0;
  for (auto x : a) n += b.count(x);
  return n;
}

inline double recall(const Set& gt, const Set& pred) {
  return static_cast<double>(count_common(gt, pred)) / static_cast<double>(gt.size());
}

inline double precision(const Set& gt, const Set& pred) {
  if (pred.empty()) return 1.0;
  return static_cast<double>(count_common(gt, pred)) / static_cast<double>(pred.size());
}

inline double f1(const Set& gt, const Set& pred) {
  const double p = precision(gt, pred);
  const double r = recall(gt, pred);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

// Counts c_t by scanning every candidate token over every member.
inline std::optional<double> agreement(const std::vector<Set>& members) {
  std::uint32_t limit = 0;
  for (const auto& m : members) {
    if (!m.empty()) limit = std::max(limit, *m.rbegin() + 1);
  }
  double sum_sq = 0.0;
  double total = 0.0;
  for (std::uint32_t t = 0; t < limit; ++t) {
    double c = 0.0;
    for (const auto& m : members) c += m.count(t) ? 1.0 : 0.0;
    sum_sq += c * c;
    total += c;
  }
  if (total == 0.0) return std::nullopt;
  return (sum_sq / total - 1.0) / (static_cast<double>(members.size()) - 1.0);
}

inline Set fold_union(const std::vector<Set>& members) {
  Set out;
  for (const auto& m : members) {
    for (auto x : m) out.insert(x);
  }
  return out;
}

// Contiguous runs by scanning a dense membership mask.
inline std::size_t runs(const Set& s) {
  if (s.empty()) return 0;
  std::vector<bool> mask(*s.rbegin() + 2, false);
  for (auto x : s) mask[x] = true;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] && (i == 0 || !mask[i - 1])) ++n;
  }
  return n;
}

struct Sample {
  std::vector<double> scores;  // normalized
  Set gt;
};

// Exhaustive sweep: for grid point i = start + k*step, extract {t : s_t >= theta}
// and average F1. Returns (theta, value) of the first maximum.
inline std::pair<double, double> calibrate(const std::vector<Sample>& samples, double start,
                                           double stop, double step) {
  double best_theta = start;
  double best_value = -1.0;
  const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
  for (long k = 0; k <= n; ++k) {
    const double theta = std::round((start + static_cast<double>(k) * step) * 1e12) / 1e12;
    double sum = 0.0;
    for (const auto& s : samples) {
      Set pred;
      for (std::uint32_t t = 0; t < s.scores.size(); ++t) {
        if (s.scores[t] >= theta) pred.insert(t);
      }
      sum += f1(s.gt, pred);
    }
    const double value = sum / static_cast<double>(samples.size());
    if (value > best_value) {
      best_value = value;
      best_theta = theta;
    }
  }
  return {best_theta, best_value};
}

inline Set random_set(std::mt19937_64& rng, std::uint32_t universe, double density) {
  std::bernoulli_distribution coin(density);
  Set out;
  for (std::uint32_t t = 0; t < universe; ++t) {
    if (coin(rng)) out.insert(t);
  }
  return out;
}

inline Set random_nonempty_set(std::mt19937_64& rng, std::uint32_t universe, double density) {
  Set out = random_set(rng, universe, density);
  if (out.empty()) out.insert(static_cast<std::uint32_t>(rng() % universe));
  return out;
}

}  // namespace oracle
