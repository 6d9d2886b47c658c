#pragma once

// Independent oracles for the dialogue metrics: a 10 ms grid discretization
// of the turn-taking taxonomy, a memoized exhaustive search over DTW warp
// paths, and a literal path enumerator for tiny inputs.

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace refmetrics {

struct Span {
  double start = 0.0;
  double end = 0.0;
};

struct GridTotals {
  double intra = 0.0;
  double inter = 0.0;
  double overlap = 0.0;
  double active_union = 0.0;
};

// Classifies every 10 ms cell of [t0, t1) by midpoint membership, then sums
// per kind. Gap runs take the speaker of the nearest non-empty cell on each
// side. Assumes the inputs keep endpoint values distinct so that boundary
// cells always contain exactly one active speaker.
inline GridTotals grid_turn_totals(const std::vector<Span>& a, const std::vector<Span>& b,
                                   double cell = 0.010) {
  double t0 = std::numeric_limits<double>::infinity();
  double t1 = -std::numeric_limits<double>::infinity();
  for (const auto& s : a) {
    t0 = std::min(t0, s.start);
    t1 = std::max(t1, s.end);
  }
  for (const auto& s : b) {
    t0 = std::min(t0, s.start);
    t1 = std::max(t1, s.end);
  }
  GridTotals g;
  if (!(t0 < t1)) return g;
  const int n_cells = static_cast<int>(std::llround((t1 - t0) / cell));

  auto covers = [](const std::vector<Span>& spans, double t) {
    for (const auto& s : spans) {
      if (t >= s.start && t < s.end) return true;
    }
    return false;
  };

  // 0: silence, 1: only A, 2: only B, 3: both
  std::vector<int> state(static_cast<std::size_t>(n_cells), 0);
  for (int c = 0; c < n_cells; ++c) {
    const double mid = t0 + (c + 0.5) * cell;
    const bool ia = covers(a, mid);
    const bool ib = covers(b, mid);
    state[static_cast<std::size_t>(c)] = (ia ? 1 : 0) + (ib ? 2 : 0);
  }

  for (int c = 0; c < n_cells; ++c) {
    if (state[static_cast<std::size_t>(c)] == 3) g.overlap += cell;
    if (state[static_cast<std::size_t>(c)] != 0) g.active_union += cell;
  }

  int c = 0;
  while (c < n_cells) {
    if (state[static_cast<std::size_t>(c)] != 0) {
      ++c;
      continue;
    }
    int run_end = c;
    while (run_end < n_cells && state[static_cast<std::size_t>(run_end)] == 0) ++run_end;
    // interior gaps only (leading/trailing silence is outside the span here)
    if (c > 0 && run_end < n_cells) {
      const int before = state[static_cast<std::size_t>(c - 1)];
      const int after = state[static_cast<std::size_t>(run_end)];
      const double dur = (run_end - c) * cell;
      if (before == after && (before == 1 || before == 2)) {
        g.intra += dur;
      } else {
        g.inter += dur;
      }
    }
    c = run_end;
  }
  return g;
}

// Memoized exhaustive minimization over all monotone warp paths with steps
// {(1,0),(0,1),(1,1)}: lexicographic (total cost, node count), then divide.
inline double dtw_best_ratio(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const int m = static_cast<int>(cost[0].size());
  std::vector<std::vector<std::pair<double, int>>> memo(
      static_cast<std::size_t>(n),
      std::vector<std::pair<double, int>>(static_cast<std::size_t>(m), {-1.0, -1}));

  auto solve = [&](auto&& self, int i, int j) -> std::pair<double, int> {
    if (i == 0 && j == 0) return {cost[0][0], 1};
    auto& slot = memo[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    if (slot.second >= 0) return slot;
    std::pair<double, int> best{std::numeric_limits<double>::infinity(), 0};
    if (i > 0 && j > 0) best = std::min(best, self(self, i - 1, j - 1));
    if (i > 0) best = std::min(best, self(self, i - 1, j));
    if (j > 0) best = std::min(best, self(self, i, j - 1));
    slot = {best.first + cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)],
            best.second + 1};
    return slot;
  };
  const auto [c, l] = solve(solve, n - 1, m - 1);
  return c / static_cast<double>(l);
}

// Literal enumeration of every warp path (exponential; tiny inputs only).
inline void enumerate_paths(const std::vector<std::vector<double>>& cost, int i, int j,
                            double acc, int len, double& best_cost, int& best_len) {
  acc += cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  len += 1;
  const int n = static_cast<int>(cost.size());
  const int m = static_cast<int>(cost[0].size());
  if (i == n - 1 && j == m - 1) {
    if (acc < best_cost || (acc == best_cost && len < best_len)) {
      best_cost = acc;
      best_len = len;
    }
    return;
  }
  if (i + 1 < n && j + 1 < m) enumerate_paths(cost, i + 1, j + 1, acc, len, best_cost, best_len);
  if (i + 1 < n) enumerate_paths(cost, i + 1, j, acc, len, best_cost, best_len);
  if (j + 1 < m) enumerate_paths(cost, i, j + 1, acc, len, best_cost, best_len);
}

inline double dtw_enumerated_ratio(const std::vector<std::vector<double>>& cost) {
  double best_cost = std::numeric_limits<double>::infinity();
  int best_len = 0;
  enumerate_paths(cost, 0, 0, 0.0, 0, best_cost, best_len);
  return best_cost / static_cast<double>(best_len);
}

}  // namespace refmetrics
