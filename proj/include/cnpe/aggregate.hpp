#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cnpe/error.hpp"
#include "cnpe/judge.hpp"
#include "cnpe/rng.hpp"

namespace cnpe {

/// Directed preference counts: wins[(winner, loser)] = how many times winner
/// was chosen over loser. The sufficient statistic for every aggregator.
struct WinMatrix {
  int n = 0;
  std::map<std::pair<int, int>, long long> wins;

  void add(int winner, int loser, long long count = 1) {
    if (winner < 0 || winner >= n || loser < 0 || loser >= n)
      throw Error(errc::index_out_of_range,
                  std::to_string(winner) + " vs " + std::to_string(loser));
    if (winner == loser) throw Error(errc::invalid_argument, "self-comparison");
    wins[{winner, loser}] += count;
  }

  long long get(int winner, int loser) const {
    auto it = wins.find({winner, loser});
    return it == wins.end() ? 0 : it->second;
  }

  long long total() const {
    long long t = 0;
    for (const auto& [key, c] : wins) t += c;
    return t;
  }
};

inline WinMatrix build_win_matrix(std::span<const PreferenceRecord> records, int n) {
  WinMatrix w;
  w.n = n;
  for (const PreferenceRecord& r : records) {
    if (r.failed) continue;
    const int loser = r.chosen == r.pair.i ? r.pair.j : r.pair.i;
    w.add(r.chosen, loser);
  }
  return w;
}

enum class AggregationMethod {
  bt_mle,
  bt_map,
  bt_mcmc,
  thurstone,
  pagerank,
  katz,
  hits,
  eigenvector,
};

inline const char* aggregation_method_name(AggregationMethod m) {
  switch (m) {
    case AggregationMethod::bt_mle: return "bt_mle";
    case AggregationMethod::bt_map: return "bt_map";
    case AggregationMethod::bt_mcmc: return "bt_mcmc";
    case AggregationMethod::thurstone: return "thurstone";
    case AggregationMethod::pagerank: return "pagerank";
    case AggregationMethod::katz: return "katz";
    case AggregationMethod::hits: return "hits";
    case AggregationMethod::eigenvector: return "eigenvector";
  }
  return "unknown";
}

inline AggregationMethod aggregation_method_from_name(const std::string& name) {
  for (AggregationMethod m :
       {AggregationMethod::bt_mle, AggregationMethod::bt_map, AggregationMethod::bt_mcmc,
        AggregationMethod::thurstone, AggregationMethod::pagerank, AggregationMethod::katz,
        AggregationMethod::hits, AggregationMethod::eigenvector})
    if (name == aggregation_method_name(m)) return m;
  throw Error(errc::config_error, "unknown aggregation method \"" + name + "\"");
}

struct FitDiagnostics {
  int iterations = 0;
  bool converged = false;
  double final_objective = 0.0;
  double acceptance_rate = -1.0;  // MCMC only
  std::vector<std::string> warnings;
  // Objective after each iteration; populated when the comparison graph is
  // connected (a single fitted component).
  std::vector<double> objective_trace;
};

struct LatentScores {
  std::vector<double> theta;
  AggregationMethod method = AggregationMethod::bt_mle;
  FitDiagnostics diagnostics;
};

namespace detail {

struct PairCount {
  int a = 0;
  int b = 0;
  long long wins_a = 0;  // a over b
  long long wins_b = 0;  // b over a
};

inline std::vector<PairCount> pair_counts(const WinMatrix& w) {
  std::map<std::pair<int, int>, PairCount> merged;
  for (const auto& [key, count] : w.wins) {
    const int a = std::min(key.first, key.second);
    const int b = std::max(key.first, key.second);
    PairCount& pc = merged[{a, b}];
    pc.a = a;
    pc.b = b;
    (key.first == a ? pc.wins_a : pc.wins_b) += count;
  }
  std::vector<PairCount> out;
  out.reserve(merged.size());
  for (const auto& [key, pc] : merged) out.push_back(pc);
  return out;
}

inline std::vector<std::vector<int>> comparison_components(const WinMatrix& w) {
  std::vector<int> parent(static_cast<std::size_t>(w.n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  for (const auto& [key, count] : w.wins) {
    const int a = find(key.first), b = find(key.second);
    if (a != b) parent[static_cast<std::size_t>(a)] = b;
  }
  std::map<int, std::vector<int>> groups;
  for (int v = 0; v < w.n; ++v) groups[find(v)].push_back(v);
  std::vector<std::vector<int>> out;
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  return out;
}

inline void center(std::vector<double>& theta) {
  if (theta.empty()) return;
  const double mean =
      std::accumulate(theta.begin(), theta.end(), 0.0) / static_cast<double>(theta.size());
  for (double& t : theta) t -= mean;
}

inline double log_sum_exp2(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

inline double log_sigmoid(double x) {
  return x < 0.0 ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x));
}

/// Bradley-Terry log-likelihood minus reg * ||theta||^2.
inline double bt_objective(std::span<const double> theta,
                           std::span<const PairCount> pairs, double reg) {
  double obj = 0.0;
  for (const PairCount& pc : pairs) {
    const double d = theta[static_cast<std::size_t>(pc.a)] - theta[static_cast<std::size_t>(pc.b)];
    if (pc.wins_a > 0) obj += static_cast<double>(pc.wins_a) * log_sigmoid(d);
    if (pc.wins_b > 0) obj += static_cast<double>(pc.wins_b) * log_sigmoid(-d);
  }
  for (double t : theta) obj -= reg * t * t;
  return obj;
}

/// Root of W - c * e^x - 2 * reg * x = 0 (strictly decreasing in x).
/// Bracketed Newton; the reg == 0 case is the plain minorization step.
inline double solve_mm_update(double W, double c, double reg, double x0) {
  if (reg == 0.0) {
    if (W <= 0.0) return -40.0;
    return std::log(W / c);
  }
  double lo = -60.0, hi = 60.0;
  double x = std::clamp(x0, lo, hi);
  for (int it = 0; it < 64; ++it) {
    const double ex = std::exp(x);
    const double f = W - c * ex - 2.0 * reg * x;
    if (std::abs(f) < 1e-13 * (1.0 + std::abs(W))) break;
    if (f > 0.0) lo = x; else hi = x;
    const double fp = -c * ex - 2.0 * reg;
    double next = x - f / fp;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) < 1e-15) { x = next; break; }
    x = next;
  }
  return x;
}

/// Penalized minorization-maximization fit on one connected component, with
/// squared-extrapolation (SQUAREM) acceleration for the slow MM tail. The
/// objective guard keeps every committed update an ascent step; with reg == 0
/// the base update is the classic fixed point and the plain log-likelihood is
/// monotone.
inline std::vector<double> fit_bt_component(int m, std::span<const PairCount> pairs,
                                            double reg, double tol, int max_iter,
                                            FitDiagnostics& diag, bool record_trace) {
  std::vector<double> win_total(static_cast<std::size_t>(m), 0.0);
  for (const PairCount& pc : pairs) {
    win_total[static_cast<std::size_t>(pc.a)] += static_cast<double>(pc.wins_a);
    win_total[static_cast<std::size_t>(pc.b)] += static_cast<double>(pc.wins_b);
  }

  std::vector<double> strength(static_cast<std::size_t>(m), 0.0);
  std::vector<double> denom(static_cast<std::size_t>(m), 0.0);
  auto mm_step = [&](const std::vector<double>& t) {
    for (int i = 0; i < m; ++i)
      strength[static_cast<std::size_t>(i)] =
          std::exp(std::clamp(t[static_cast<std::size_t>(i)], -60.0, 60.0));
    std::fill(denom.begin(), denom.end(), 0.0);
    for (const PairCount& pc : pairs) {
      const double games = static_cast<double>(pc.wins_a + pc.wins_b);
      const double inv_s = games / (strength[static_cast<std::size_t>(pc.a)] +
                                    strength[static_cast<std::size_t>(pc.b)]);
      denom[static_cast<std::size_t>(pc.a)] += inv_s;
      denom[static_cast<std::size_t>(pc.b)] += inv_s;
    }
    std::vector<double> next(static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      if (denom[si] == 0.0) continue;  // no comparisons (singleton handled upstream)
      next[si] = solve_mm_update(win_total[si], denom[si], reg, t[si]);
    }
    center(next);
    return next;
  };
  auto objective = [&](const std::vector<double>& t) { return bt_objective(t, pairs, reg); };
  auto max_delta = [m](const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (int i = 0; i < m; ++i)
      d = std::max(d, std::abs(a[static_cast<std::size_t>(i)] -
                               b[static_cast<std::size_t>(i)]));
    return d;
  };

  std::vector<double> theta(static_cast<std::size_t>(m), 0.0);
  if (record_trace) diag.objective_trace.push_back(objective(theta));
  bool converged = false;
  int evals = 0;
  while (evals < max_iter) {
    std::vector<double> theta1 = mm_step(theta);
    ++evals;
    if (max_delta(theta1, theta) < tol) {
      theta = std::move(theta1);
      if (record_trace) diag.objective_trace.push_back(objective(theta));
      converged = true;
      break;
    }
    if (evals >= max_iter) {
      theta = std::move(theta1);
      if (record_trace) diag.objective_trace.push_back(objective(theta));
      break;
    }
    std::vector<double> theta2 = mm_step(theta1);
    ++evals;

    // SQUAREM extrapolation through the two plain steps
    double rr = 0.0, vv = 0.0;
    for (int i = 0; i < m; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      const double r = theta1[si] - theta[si];
      const double v = theta2[si] - 2.0 * theta1[si] + theta[si];
      rr += r * r;
      vv += v * v;
    }
    if (vv < 1e-30 || evals >= max_iter) {
      theta = std::move(theta2);
      if (record_trace) diag.objective_trace.push_back(objective(theta));
      continue;
    }
    const double alpha = std::min(-1.0, -std::sqrt(rr / vv));
    std::vector<double> extrapolated(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      const double r = theta1[si] - theta[si];
      const double v = theta2[si] - 2.0 * theta1[si] + theta[si];
      extrapolated[si] = theta[si] - 2.0 * alpha * r + alpha * alpha * v;
    }
    std::vector<double> theta3 = mm_step(extrapolated);
    ++evals;
    // accept the accelerated point only when it does not lose objective
    if (objective(theta3) >= objective(theta2)) theta = std::move(theta3);
    else theta = std::move(theta2);
    if (record_trace) diag.objective_trace.push_back(objective(theta));
  }
  diag.iterations = std::max(diag.iterations, evals);
  diag.converged = diag.converged && converged;
  diag.final_objective += objective(theta);
  return theta;
}

// --- Thurstone-Mosteller numerics ------------------------------------------

inline double log_norm_pdf(double x) {
  return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double log_norm_cdf(double x) {
  if (x < -25.0) {
    // asymptotic expansion of the lower tail
    const double x2 = x * x;
    return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) +
           std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
  }
  if (x > 8.0) return std::log1p(-0.5 * std::erfc(x / std::numbers::sqrt2));
  return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Inverse Mills ratio phi(x) / Phi(x).
inline double norm_hazard(double x) {
  if (x < -25.0) {
    const double x2 = x * x;
    return -x / (1.0 - 1.0 / x2 + 3.0 / (x2 * x2));
  }
  return std::exp(log_norm_pdf(x) - log_norm_cdf(x));
}

inline double tm_objective(std::span<const double> theta,
                           std::span<const PairCount> pairs, double reg) {
  double obj = 0.0;
  for (const PairCount& pc : pairs) {
    const double d = theta[static_cast<std::size_t>(pc.a)] - theta[static_cast<std::size_t>(pc.b)];
    if (pc.wins_a > 0) obj += static_cast<double>(pc.wins_a) * log_norm_cdf(d);
    if (pc.wins_b > 0) obj += static_cast<double>(pc.wins_b) * log_norm_cdf(-d);
  }
  for (double t : theta) obj -= reg * t * t;
  return obj;
}

/// Coordinate-ascent Newton with backtracking on the Gaussian-link model.
inline std::vector<double> fit_tm_component(int m, std::span<const PairCount> pairs,
                                            double reg, double tol, int max_iter,
                                            FitDiagnostics& diag, bool record_trace) {
  std::vector<std::vector<std::pair<int, std::pair<long long, long long>>>> incident(
      static_cast<std::size_t>(m));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const PairCount& pc = pairs[k];
    incident[static_cast<std::size_t>(pc.a)].push_back({pc.b, {pc.wins_a, pc.wins_b}});
    incident[static_cast<std::size_t>(pc.b)].push_back({pc.a, {pc.wins_b, pc.wins_a}});
  }
  std::vector<double> theta(static_cast<std::size_t>(m), 0.0);

  auto local_obj = [&](int i, double ti) {
    double obj = -reg * ti * ti;
    for (const auto& [j, w] : incident[static_cast<std::size_t>(i)]) {
      const double d = ti - theta[static_cast<std::size_t>(j)];
      if (w.first > 0) obj += static_cast<double>(w.first) * log_norm_cdf(d);
      if (w.second > 0) obj += static_cast<double>(w.second) * log_norm_cdf(-d);
    }
    return obj;
  };

  if (record_trace) diag.objective_trace.push_back(tm_objective(theta, pairs, reg));
  bool converged = false;
  int it = 0;
  for (; it < max_iter; ++it) {
    double delta = 0.0;
    for (int i = 0; i < m; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      double g = -2.0 * reg * theta[si];
      double curvature = 2.0 * reg;
      for (const auto& [j, w] : incident[si]) {
        const double d = theta[si] - theta[static_cast<std::size_t>(j)];
        if (w.first > 0) {
          const double lam = norm_hazard(d);
          g += static_cast<double>(w.first) * lam;
          curvature += static_cast<double>(w.first) * lam * (lam + d);
        }
        if (w.second > 0) {
          const double lam = norm_hazard(-d);
          g -= static_cast<double>(w.second) * lam;
          curvature += static_cast<double>(w.second) * lam * (lam - d);
        }
      }
      if (curvature <= 0.0) continue;
      double step = std::clamp(g / curvature, -4.0, 4.0);
      const double base = local_obj(i, theta[si]);
      for (int half = 0; half < 40 && local_obj(i, theta[si] + step) < base; ++half)
        step *= 0.5;
      theta[si] += step;
      delta = std::max(delta, std::abs(step));
    }
    center(theta);
    if (record_trace) diag.objective_trace.push_back(tm_objective(theta, pairs, reg));
    if (delta < tol) {
      converged = true;
      ++it;
      break;
    }
  }
  diag.iterations = std::max(diag.iterations, it);
  diag.converged = diag.converged && converged;
  diag.final_objective += tm_objective(theta, pairs, reg);
  return theta;
}

// --- MCMC -------------------------------------------------------------------

struct McmcSettings {
  double prior_sd = 2.0;
  int n_samples = 4000;
  int burn_in = 1000;
  std::uint64_t seed = 0;
};

/// Single-site random-walk Metropolis on the MAP posterior; the proposal
/// scale is tuned toward 40% acceptance during burn-in.
inline std::vector<double> fit_mcmc_component(int m, std::span<const PairCount> pairs,
                                              const McmcSettings& s,
                                              FitDiagnostics& diag, SplitMix64& rng) {
  std::vector<std::vector<std::pair<int, std::pair<long long, long long>>>> incident(
      static_cast<std::size_t>(m));
  for (const PairCount& pc : pairs) {
    incident[static_cast<std::size_t>(pc.a)].push_back({pc.b, {pc.wins_a, pc.wins_b}});
    incident[static_cast<std::size_t>(pc.b)].push_back({pc.a, {pc.wins_b, pc.wins_a}});
  }
  const double inv_2var = 1.0 / (2.0 * s.prior_sd * s.prior_sd);
  std::vector<double> theta(static_cast<std::size_t>(m), 0.0);

  auto local_logpost = [&](int i, double ti) {
    double lp = -inv_2var * ti * ti;
    for (const auto& [j, w] : incident[static_cast<std::size_t>(i)]) {
      const double d = ti - theta[static_cast<std::size_t>(j)];
      if (w.first > 0) lp += static_cast<double>(w.first) * log_sigmoid(d);
      if (w.second > 0) lp += static_cast<double>(w.second) * log_sigmoid(-d);
    }
    return lp;
  };

  double scale = 0.5;
  std::vector<double> mean(static_cast<std::size_t>(m), 0.0);
  long long accepted = 0, proposed = 0;
  long long tune_accepted = 0, tune_proposed = 0;

  const int total_sweeps = s.burn_in + s.n_samples;
  for (int sweep = 0; sweep < total_sweeps; ++sweep) {
    const bool retained = sweep >= s.burn_in;
    for (int i = 0; i < m; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      const double current = theta[si];
      const double proposal = current + scale * rng.next_gaussian();
      const double delta = local_logpost(i, proposal) - local_logpost(i, current);
      const bool accept = delta >= 0.0 || rng.next_double() < std::exp(delta);
      if (accept) theta[si] = proposal;
      if (retained) {
        ++proposed;
        if (accept) ++accepted;
      } else {
        ++tune_proposed;
        if (accept) ++tune_accepted;
      }
    }
    if (!retained && (sweep + 1) % 64 == 0 && tune_proposed > 0) {
      const double rate = static_cast<double>(tune_accepted) / static_cast<double>(tune_proposed);
      scale = std::clamp(scale * std::exp(1.5 * (rate - 0.4)), 1e-3, 50.0);
      tune_accepted = tune_proposed = 0;
    }
    if (retained)
      for (int i = 0; i < m; ++i)
        mean[static_cast<std::size_t>(i)] += theta[static_cast<std::size_t>(i)];
  }
  for (double& v : mean) v /= static_cast<double>(s.n_samples);

  diag.iterations = std::max(diag.iterations, total_sweeps);
  const double rate = proposed > 0 ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
  diag.acceptance_rate = rate;
  if (rate < 0.05 || rate > 0.95)
    diag.warnings.push_back("degenerate-sampler: acceptance rate " + std::to_string(rate));
  diag.final_objective += bt_objective(mean, pairs, inv_2var);
  return mean;
}

// --- Component orchestration ------------------------------------------------

template <typename ComponentFitter>
inline LatentScores fit_by_components(const WinMatrix& w, AggregationMethod method,
                                      FitDiagnostics& diag,
                                      ComponentFitter&& fit_component) {
  if (w.n <= 0) throw Error(errc::invalid_argument, "empty win matrix");
  LatentScores scores;
  scores.method = method;
  scores.theta.assign(static_cast<std::size_t>(w.n), 0.0);

  const std::vector<PairCount> all_pairs = pair_counts(w);
  const std::vector<std::vector<int>> components = comparison_components(w);
  const bool connected = components.size() == 1;
  if (!connected)
    diag.warnings.push_back(
        "comparison graph disconnected: fitted per component (" +
        std::to_string(components.size()) + " components)");

  // win/loss totals for ordering disconnected components
  std::vector<long long> item_wins(static_cast<std::size_t>(w.n), 0);
  std::vector<long long> item_losses(static_cast<std::size_t>(w.n), 0);
  for (const auto& [key, count] : w.wins) {
    item_wins[static_cast<std::size_t>(key.first)] += count;
    item_losses[static_cast<std::size_t>(key.second)] += count;
  }

  struct FittedComponent {
    std::vector<int> members;
    std::vector<double> theta;
    double win_rate = 0.5;
  };
  std::vector<FittedComponent> fitted;
  fitted.reserve(components.size());

  for (const std::vector<int>& members : components) {
    std::vector<int> local(static_cast<std::size_t>(w.n), -1);
    for (std::size_t k = 0; k < members.size(); ++k)
      local[static_cast<std::size_t>(members[k])] = static_cast<int>(k);
    std::vector<PairCount> local_pairs;
    for (const PairCount& pc : all_pairs) {
      if (local[static_cast<std::size_t>(pc.a)] < 0) continue;
      if (local[static_cast<std::size_t>(pc.b)] < 0) continue;
      PairCount lp = pc;
      lp.a = local[static_cast<std::size_t>(pc.a)];
      lp.b = local[static_cast<std::size_t>(pc.b)];
      local_pairs.push_back(lp);
    }
    FittedComponent fc;
    fc.members = members;
    fc.theta = fit_component(static_cast<int>(members.size()), local_pairs, connected);
    double rate = 0.0;
    for (int v : members) {
      const double wi = static_cast<double>(item_wins[static_cast<std::size_t>(v)]);
      const double li = static_cast<double>(item_losses[static_cast<std::size_t>(v)]);
      rate += (wi + 0.5) / (wi + li + 1.0);
    }
    fc.win_rate = rate / static_cast<double>(members.size());
    fitted.push_back(std::move(fc));
  }

  std::sort(fitted.begin(), fitted.end(), [](const FittedComponent& a, const FittedComponent& b) {
    if (a.win_rate != b.win_rate) return a.win_rate > b.win_rate;
    return a.members.front() < b.members.front();
  });

  double next_top = 0.0;
  bool first = true;
  for (const FittedComponent& fc : fitted) {
    const auto [mn, mx] = std::minmax_element(fc.theta.begin(), fc.theta.end());
    const double offset = first ? 0.0 : next_top - *mx;
    first = false;
    for (std::size_t k = 0; k < fc.members.size(); ++k)
      scores.theta[static_cast<std::size_t>(fc.members[k])] = fc.theta[k] + offset;
    next_top = *mn + offset - 1.0;
  }
  center(scores.theta);
  scores.diagnostics = std::move(diag);
  return scores;
}

}  // namespace detail

/// Maximum-likelihood Bradley-Terry fit (minorization-maximization with
/// squared extrapolation) and a small ridge penalty for perfect-separation
/// robustness. record_trace keeps the per-iteration objective for
/// ascent-property checks.
inline LatentScores fit_bradley_terry_mle(const WinMatrix& w, double reg = 1e-4,
                                          double tol = 1e-8, int max_iter = 10000,
                                          bool record_trace = false) {
  if (reg < 0.0) throw Error(errc::invalid_argument, "reg must be >= 0");
  FitDiagnostics diag;
  diag.converged = true;
  LatentScores scores = detail::fit_by_components(
      w, AggregationMethod::bt_mle, diag,
      [&](int m, std::span<const detail::PairCount> pairs, bool connected) {
        return detail::fit_bt_component(m, pairs, reg, tol, max_iter, diag,
                                        record_trace && connected);
      });
  if (!scores.diagnostics.converged)
    scores.diagnostics.warnings.push_back("not-converged");
  return scores;
}

/// Gaussian-prior MAP fit: identical machinery with reg = 1 / (2 sd^2).
inline LatentScores fit_bradley_terry_map(const WinMatrix& w, double prior_sd = 2.0,
                                          double tol = 1e-8, int max_iter = 10000,
                                          bool record_trace = false) {
  if (prior_sd <= 0.0) throw Error(errc::invalid_argument, "prior_sd must be positive");
  const double reg = 1.0 / (2.0 * prior_sd * prior_sd);
  FitDiagnostics diag;
  diag.converged = true;
  LatentScores scores = detail::fit_by_components(
      w, AggregationMethod::bt_map, diag,
      [&](int m, std::span<const detail::PairCount> pairs, bool connected) {
        return detail::fit_bt_component(m, pairs, reg, tol, max_iter, diag,
                                        record_trace && connected);
      });
  if (!scores.diagnostics.converged)
    scores.diagnostics.warnings.push_back("not-converged");
  return scores;
}

/// Posterior mean under the MAP model via random-walk Metropolis.
inline LatentScores fit_bradley_terry_mcmc(const WinMatrix& w, double prior_sd = 2.0,
                                           int n_samples = 4000, int burn_in = 1000,
                                           std::uint64_t seed = 0) {
  if (prior_sd <= 0.0) throw Error(errc::invalid_argument, "prior_sd must be positive");
  if (n_samples <= 0 || burn_in < 0)
    throw Error(errc::invalid_argument, "n_samples must be positive, burn_in >= 0");
  detail::McmcSettings settings{prior_sd, n_samples, burn_in, seed};
  FitDiagnostics diag;
  diag.converged = true;
  int component_index = 0;
  return detail::fit_by_components(
      w, AggregationMethod::bt_mcmc, diag,
      [&](int m, std::span<const detail::PairCount> pairs, bool record_trace) {
        (void)record_trace;
        SplitMix64 rng(derive_stream_seed(settings.seed,
                                          static_cast<std::uint64_t>(component_index++)));
        return detail::fit_mcmc_component(m, pairs, settings, diag, rng);
      });
}

/// Thurstone-Mosteller fit: Gaussian cumulative link P(i beats j) =
/// Phi(theta_i - theta_j), same ridge penalty as the BT MLE.
inline LatentScores fit_thurstone_mosteller(const WinMatrix& w, double reg = 1e-4,
                                            double tol = 1e-8, int max_iter = 10000,
                                            bool record_trace = false) {
  if (reg < 0.0) throw Error(errc::invalid_argument, "reg must be >= 0");
  FitDiagnostics diag;
  diag.converged = true;
  LatentScores scores = detail::fit_by_components(
      w, AggregationMethod::thurstone, diag,
      [&](int m, std::span<const detail::PairCount> pairs, bool connected) {
        return detail::fit_tm_component(m, pairs, reg, tol, max_iter, diag,
                                        record_trace && connected);
      });
  if (!scores.diagnostics.converged)
    scores.diagnostics.warnings.push_back("not-converged");
  return scores;
}

struct CentralityConfig {
  double damping = 0.85;      // pagerank teleport complement
  double attenuation = 0.1;   // katz
  double tol = 1e-10;
  int max_iter = 1000;
};

namespace detail {

struct PreferenceDigraph {
  // edge loser -> winner, so centrality mass flows toward preferred items
  std::vector<std::vector<std::pair<int, double>>> in_edges;  // per winner: (loser, count)
  std::vector<double> out_weight;                             // per loser: total losses

  explicit PreferenceDigraph(const WinMatrix& w) {
    in_edges.assign(static_cast<std::size_t>(w.n), {});
    out_weight.assign(static_cast<std::size_t>(w.n), 0.0);
    for (const auto& [key, count] : w.wins) {
      const int winner = key.first, loser = key.second;
      in_edges[static_cast<std::size_t>(winner)].push_back(
          {loser, static_cast<double>(count)});
      out_weight[static_cast<std::size_t>(loser)] += static_cast<double>(count);
    }
  }

  int size() const { return static_cast<int>(in_edges.size()); }
};

inline bool strongly_connected(const WinMatrix& w) {
  const int n = w.n;
  if (n <= 1) return true;
  std::vector<std::vector<int>> fwd(static_cast<std::size_t>(n)), rev(static_cast<std::size_t>(n));
  for (const auto& [key, count] : w.wins) {
    fwd[static_cast<std::size_t>(key.second)].push_back(key.first);
    rev[static_cast<std::size_t>(key.first)].push_back(key.second);
  }
  auto reach_all = [n](const std::vector<std::vector<int>>& adj) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 0;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      ++count;
      for (int u : adj[static_cast<std::size_t>(v)])
        if (!seen[static_cast<std::size_t>(u)]) {
          seen[static_cast<std::size_t>(u)] = 1;
          stack.push_back(u);
        }
    }
    return count == n;
  };
  return reach_all(fwd) && reach_all(rev);
}

}  // namespace detail

/// Centrality scores on the directed loser -> winner preference graph,
/// normalized to sum 1.
inline LatentScores rank_by_centrality(const WinMatrix& w, AggregationMethod method,
                                       const CentralityConfig& config = {}) {
  if (w.n <= 0 || w.wins.empty())
    throw Error(errc::invalid_argument, "win matrix has no preferences");
  const detail::PreferenceDigraph g(w);
  const int n = w.n;
  const double uniform = 1.0 / static_cast<double>(n);

  LatentScores scores;
  scores.method = method;
  std::vector<double> x(static_cast<std::size_t>(n), uniform);
  std::vector<double> next(static_cast<std::size_t>(n), 0.0);
  bool converged = false;
  int it = 0;

  auto l1_delta = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) d += std::abs(a[k] - b[k]);
    return d;
  };

  switch (method) {
    case AggregationMethod::pagerank: {
      const double d = config.damping;
      for (; it < config.max_iter; ++it) {
        double dangling = 0.0;
        for (int v = 0; v < n; ++v)
          if (g.out_weight[static_cast<std::size_t>(v)] == 0.0)
            dangling += x[static_cast<std::size_t>(v)];
        for (int v = 0; v < n; ++v) {
          double in = 0.0;
          for (const auto& [u, cnt] : g.in_edges[static_cast<std::size_t>(v)])
            in += x[static_cast<std::size_t>(u)] * cnt / g.out_weight[static_cast<std::size_t>(u)];
          next[static_cast<std::size_t>(v)] = (1.0 - d) * uniform + d * (in + dangling * uniform);
        }
        const double delta = l1_delta(next, x);
        x.swap(next);
        if (delta < config.tol) {
          converged = true;
          ++it;
          break;
        }
      }
      break;
    }
    case AggregationMethod::katz: {
      std::fill(x.begin(), x.end(), 1.0);
      for (; it < config.max_iter; ++it) {
        double max_abs = 0.0;
        for (int v = 0; v < n; ++v) {
          double in = 0.0;
          for (const auto& [u, cnt] : g.in_edges[static_cast<std::size_t>(v)])
            in += cnt * x[static_cast<std::size_t>(u)];
          next[static_cast<std::size_t>(v)] = config.attenuation * in + 1.0;
          max_abs = std::max(max_abs, std::abs(next[static_cast<std::size_t>(v)]));
        }
        double delta = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k)
          delta = std::max(delta, std::abs(next[k] - x[k]));
        x.swap(next);
        if (max_abs > 1e12) {
          scores.diagnostics.warnings.push_back(
              "katz series diverged; attenuation exceeds 1/spectral radius");
          break;
        }
        if (delta < config.tol * std::max(1.0, max_abs)) {
          converged = true;
          ++it;
          break;
        }
      }
      double sum = std::accumulate(x.begin(), x.end(), 0.0);
      if (sum > 0.0)
        for (double& v : x) v /= sum;
      break;
    }
    case AggregationMethod::hits: {
      std::vector<double> hub(static_cast<std::size_t>(n), uniform);
      for (; it < config.max_iter; ++it) {
        for (int v = 0; v < n; ++v) {
          double in = 0.0;
          for (const auto& [u, cnt] : g.in_edges[static_cast<std::size_t>(v)])
            in += cnt * hub[static_cast<std::size_t>(u)];
          next[static_cast<std::size_t>(v)] = in;
        }
        double norm = std::sqrt(std::inner_product(next.begin(), next.end(), next.begin(), 0.0));
        if (norm == 0.0) {
          scores.diagnostics.warnings.push_back("hits collapsed to the zero vector");
          break;
        }
        for (double& v : next) v /= norm;
        std::vector<double> new_hub(static_cast<std::size_t>(n), 0.0);
        for (int v = 0; v < n; ++v)
          for (const auto& [u, cnt] : g.in_edges[static_cast<std::size_t>(v)])
            new_hub[static_cast<std::size_t>(u)] += cnt * next[static_cast<std::size_t>(v)];
        norm = std::sqrt(std::inner_product(new_hub.begin(), new_hub.end(), new_hub.begin(), 0.0));
        if (norm > 0.0)
          for (double& v : new_hub) v /= norm;
        hub.swap(new_hub);
        const double delta = l1_delta(next, x);
        x.swap(next);
        if (delta < config.tol) {
          converged = true;
          ++it;
          break;
        }
      }
      double sum = std::accumulate(x.begin(), x.end(), 0.0);
      if (sum > 0.0)
        for (double& v : x) v /= sum;
      break;
    }
    case AggregationMethod::eigenvector: {
      if (!detail::strongly_connected(w))
        scores.diagnostics.warnings.push_back(
            "reducible-graph: preference digraph is not strongly connected");
      for (; it < config.max_iter; ++it) {
        for (int v = 0; v < n; ++v) {
          double in = 0.0;
          for (const auto& [u, cnt] : g.in_edges[static_cast<std::size_t>(v)])
            in += cnt * x[static_cast<std::size_t>(u)];
          next[static_cast<std::size_t>(v)] = in;
        }
        const double sum = std::accumulate(next.begin(), next.end(), 0.0);
        if (sum < 1e-300) {
          scores.diagnostics.warnings.push_back(
              "eigenvector iteration collapsed (acyclic preference graph); returning uniform");
          std::fill(x.begin(), x.end(), uniform);
          break;
        }
        for (double& v : next) v /= sum;
        const double delta = l1_delta(next, x);
        x.swap(next);
        if (delta < config.tol) {
          converged = true;
          ++it;
          break;
        }
      }
      break;
    }
    default:
      throw Error(errc::invalid_argument, "not a centrality method");
  }

  scores.theta = std::move(x);
  scores.diagnostics.iterations = it;
  scores.diagnostics.converged = converged;
  if (!converged) scores.diagnostics.warnings.push_back("not-converged");
  return scores;
}

struct RankingResult {
  std::vector<int> order;          // item positions, best first
  std::vector<double> percentile;  // percentile[k] belongs to order[k]
  std::optional<std::vector<Decision>> decisions;  // aligned with order

  std::vector<int> rank_by_item() const {
    std::vector<int> rank(order.size(), 0);
    for (std::size_t k = 0; k < order.size(); ++k)
      rank[static_cast<std::size_t>(order[k])] = static_cast<int>(k);
    return rank;
  }

  std::vector<double> percentile_by_item() const {
    std::vector<double> out(order.size(), 0.0);
    for (std::size_t k = 0; k < order.size(); ++k)
      out[static_cast<std::size_t>(order[k])] = percentile[k];
    return out;
  }
};

/// Descending theta, ties broken by ascending position. Percentiles map the
/// 0-based rank onto [0, 100] with 100 = best; items with exactly equal theta
/// share the average-rank percentile of their tie group.
inline RankingResult rank_papers(const LatentScores& scores) {
  const int n = static_cast<int>(scores.theta.size());
  if (n == 0) throw Error(errc::invalid_argument, "empty scores");
  for (double t : scores.theta)
    if (!std::isfinite(t)) throw Error(errc::invalid_argument, "non-finite theta");

  RankingResult result;
  result.order.resize(static_cast<std::size_t>(n));
  std::iota(result.order.begin(), result.order.end(), 0);
  std::sort(result.order.begin(), result.order.end(), [&](int a, int b) {
    const double ta = scores.theta[static_cast<std::size_t>(a)];
    const double tb = scores.theta[static_cast<std::size_t>(b)];
    if (ta != tb) return ta > tb;
    return a < b;
  });

  result.percentile.resize(static_cast<std::size_t>(n));
  if (n == 1) {
    result.percentile[0] = 100.0;
    return result;
  }
  std::size_t k = 0;
  while (k < result.order.size()) {
    std::size_t end = k + 1;
    const double t = scores.theta[static_cast<std::size_t>(result.order[k])];
    while (end < result.order.size() &&
           scores.theta[static_cast<std::size_t>(result.order[end])] == t)
      ++end;
    const double avg_rank = (static_cast<double>(k) + static_cast<double>(end - 1)) / 2.0;
    const double pct = 100.0 * (static_cast<double>(n - 1) - avg_rank) / static_cast<double>(n - 1);
    for (std::size_t p = k; p < end; ++p) result.percentile[p] = pct;
    k = end;
  }
  return result;
}

/// Top round(rate * n) items (half-up) accept, the rest reject.
inline RankingResult apply_decision_threshold(const RankingResult& ranking,
                                              double acceptance_rate) {
  if (acceptance_rate <= 0.0 || acceptance_rate > 1.0)
    throw Error(errc::invalid_argument, "acceptance_rate must be in (0, 1]");
  const int n = static_cast<int>(ranking.order.size());
  const int accepts = std::clamp(
      static_cast<int>(std::floor(acceptance_rate * static_cast<double>(n) + 0.5)), 0, n);
  RankingResult out = ranking;
  out.decisions = std::vector<Decision>(static_cast<std::size_t>(n), Decision::reject);
  for (int k = 0; k < accepts; ++k)
    (*out.decisions)[static_cast<std::size_t>(k)] = Decision::accept;
  return out;
}

}  // namespace cnpe
