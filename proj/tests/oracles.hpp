// Test-only reference implementations, independent of the library's
// dynamic-programming and alignment code paths.
#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cbxt/tensor.hpp"

namespace oracles {

// Log-sum over every monotonic alignment path by explicit enumeration:
// from (t, u) either consume a frame with a blank or emit the next label,
// ending with the forced blank at (T-1, U).
inline double rnnt_enumeration(const cbxt::Tensor& log_probs, std::span<const int> target,
                               int blank_id) {
  int T = log_probs.dim(0);
  int U = static_cast<int>(target.size());
  auto lse2 = [](double a, double b) {
    double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
  };
  std::function<double(int, int)> go = [&](int t, int u) -> double {
    if (t == T - 1 && u == U) return log_probs.at(t, u, blank_id);
    bool can_blank = t < T - 1;
    bool can_label = u < U;
    double via_blank = can_blank ? log_probs.at(t, u, blank_id) + go(t + 1, u) : 0.0;
    double via_label =
        can_label ? log_probs.at(t, u, target[static_cast<size_t>(u)]) + go(t, u + 1) : 0.0;
    if (can_blank && can_label) return lse2(via_blank, via_label);
    return can_blank ? via_blank : via_label;
  };
  return go(0, 0);
}

// Edit distance by memoized recursion (independent of the iterative DP +
// backtrace in the library).
inline int edit_distance_recursive(std::span<const std::string> ref,
                                   std::span<const std::string> hyp) {
  std::map<std::pair<int, int>, int> memo;
  std::function<int(int, int)> go = [&](int i, int j) -> int {
    if (i == 0) return j;
    if (j == 0) return i;
    auto it = memo.find({i, j});
    if (it != memo.end()) return it->second;
    int sub = go(i - 1, j - 1) + (ref[static_cast<size_t>(i - 1)] == hyp[static_cast<size_t>(j - 1)] ? 0 : 1);
    int del = go(i - 1, j) + 1;
    int ins = go(i, j - 1) + 1;
    int best = std::min({sub, del, ins});
    memo[{i, j}] = best;
    return best;
  };
  return go(static_cast<int>(ref.size()), static_cast<int>(hyp.size()));
}

// Random normalized log-prob lattice of shape [T x (U+1) x V].
inline cbxt::Tensor random_lattice(int T, int U, int V, std::mt19937& rng) {
  cbxt::Tensor lat({T, U + 1, V});
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  for (int t = 0; t < T; ++t) {
    for (int u = 0; u <= U; ++u) {
      double mx = -1e300;
      for (int v = 0; v < V; ++v) {
        lat.at(t, u, v) = dist(rng);
        mx = std::max(mx, lat.at(t, u, v));
      }
      double z = 0.0;
      for (int v = 0; v < V; ++v) z += std::exp(lat.at(t, u, v) - mx);
      double lse = mx + std::log(z);
      for (int v = 0; v < V; ++v) lat.at(t, u, v) -= lse;
    }
  }
  return lat;
}

inline long binomial(int n, int k) {
  long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace oracles
