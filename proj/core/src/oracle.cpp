#include "ctxgcn/oracle.hpp"

#include <cmath>
#include <deque>
#include <random>
#include <stdexcept>

namespace ctxgcn::oracle {

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& point, double step) {
  std::vector<double> grad(point.size());
  std::vector<double> x = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    x[i] = point[i] + step;
    const double hi = f(x);
    x[i] = point[i] - step;
    const double lo = f(x);
    x[i] = point[i];
    grad[i] = (hi - lo) / (2.0 * step);
  }
  return grad;
}

bool close(double a, double b, double rel_tol, double abs_floor) {
  const double diff = std::abs(a - b);
  const double scale = std::max(std::abs(a), std::abs(b));
  return diff <= std::max(rel_tol * scale, abs_floor);
}

std::pair<double, std::size_t> worst_rel_error(const std::vector<double>& got,
                                               const std::vector<double>& want,
                                               double abs_floor) {
  if (got.size() != want.size())
    throw std::invalid_argument("worst_rel_error: gradient lengths differ");
  double worst = 0.0;
  std::size_t at = 0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double diff = std::abs(got[i] - want[i]);
    if (diff <= abs_floor) continue;
    const double rel = diff / std::max(std::abs(got[i]), std::abs(want[i]));
    if (rel > worst) {
      worst = rel;
      at = i;
    }
  }
  return {worst, at};
}

std::vector<double> naive_gcn(const std::vector<std::vector<double>>& a,
                              const std::vector<double>& u, std::size_t n, std::size_t s,
                              const std::vector<std::vector<double>>& w, std::size_t c,
                              bool relu, const std::vector<bool>& differential) {
  const std::size_t op_count = a.size();
  if (op_count == 0) throw std::invalid_argument("naive_gcn: needs at least one operator");
  if (n > 8 || op_count > 8)
    throw std::invalid_argument("naive_gcn: test-scale oracle, needs n <= 8 and op_count <= 8");
  if (w.size() != op_count)
    throw std::invalid_argument("naive_gcn: operator and filter counts differ");
  if (u.size() != s * n) throw std::invalid_argument("naive_gcn: u has wrong length");
  if (!differential.empty() && differential.size() != op_count)
    throw std::invalid_argument("naive_gcn: differential flag count differs from operators");
  for (const auto& ak : a)
    if (ak.size() != n * n) throw std::invalid_argument("naive_gcn: operator has wrong length");
  for (const auto& wk : w)
    if (wk.size() != s * c) throw std::invalid_argument("naive_gcn: filter has wrong length");

  // H_ij = f(sum_k sum_p B_ip U^T_pq ... ), fully unrolled:
  //   pre(i, j) = sum_k sum_q (sum_p B_k(i, p) * u(q, p)) * w_k(q, j)
  // where B_k is A_k or I - A_k.
  std::vector<double> h(n * c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      double pre = 0.0;
      for (std::size_t k = 0; k < op_count; ++k) {
        const bool diff = !differential.empty() && differential[k];
        for (std::size_t q = 0; q < s; ++q) {
          double agg = 0.0;
          for (std::size_t p = 0; p < n; ++p) {
            double b = a[k][i * n + p];
            if (diff) b = (i == p ? 1.0 : 0.0) - b;
            agg += b * u[q * n + p];
          }
          pre += agg * w[k][q * c + j];
        }
      }
      h[i * c + j] = relu ? (pre > 0.0 ? pre : 0.0) : pre;
    }
  }
  return h;
}

std::vector<double> naive_matrix_power(const std::vector<double>& a, std::size_t n,
                                       std::size_t power) {
  if (a.size() != n * n) throw std::invalid_argument("naive_matrix_power: bad length");
  if (n > 8)
    throw std::invalid_argument("naive_matrix_power: test-scale oracle, needs n <= 8");
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) out[i * n + i] = 1.0;
  for (std::size_t step = 0; step < power; ++step) {
    std::vector<double> next(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += out[i * n + k] * a[k * n + j];
        next[i * n + j] = acc;
      }
    out = std::move(next);
  }
  return out;
}

long double gamma_bound(std::size_t op_count, long double delta, long double epsilon) {
  if (op_count < 2) throw std::invalid_argument("gamma_bound: needs op_count >= 2");
  if (!(delta > 0.0L)) throw std::invalid_argument("gamma_bound: delta must be positive");
  if (!(epsilon > 0.0L && epsilon < 0.5L))
    throw std::invalid_argument("gamma_bound: epsilon must lie in (0, 0.5)");
  const long double root = std::sqrt(1.0L - 2.0L * epsilon);
  const long double k = static_cast<long double>(op_count);
  return std::log(k * root / (1.0L - root) + 1.0L) / delta;
}

std::size_t component_count(std::size_t n,
                            const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::vector<char> seen(n, 0);
  std::size_t components = 0;
  for (std::size_t start = 0; start < n; ++start) {
    if (seen[start]) continue;
    ++components;
    std::deque<std::size_t> queue{start};
    seen[start] = 1;
    while (!queue.empty()) {
      const std::size_t v = queue.front();
      queue.pop_front();
      for (std::size_t nb : adj[v])
        if (!seen[nb]) {
          seen[nb] = 1;
          queue.push_back(nb);
        }
    }
  }
  return components;
}

bool is_acyclic(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  // A simple undirected graph is a forest iff |E| = n - #components.
  return edges.size() + component_count(n, edges) == n;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Crisp map on one entry's op_count values, evaluated as
//   A_k = 1 / sum_r exp(gamma * (v_r - v_k))
// which stays IEEE-safe at very large gamma (overflowed sums give 0).
void crisp_entry(const std::vector<double>& values, double gamma, std::vector<double>& out) {
  const std::size_t op_count = values.size();
  out.resize(op_count);
  for (std::size_t k = 0; k < op_count; ++k) {
    double denom = 0.0;
    for (std::size_t r = 0; r < op_count; ++r) denom += std::exp(gamma * (values[r] - values[k]));
    out[k] = 1.0 / denom;
  }
}

double worst_pair_overlap(const std::vector<double>& crisp) {
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < crisp.size(); ++k)
    for (std::size_t k2 = k + 1; k2 < crisp.size(); ++k2)
      worst = std::max(worst, crisp[k] * crisp[k2]);
  return worst;
}

}  // namespace

PropositionReport proposition_trials(std::size_t op_count, double delta, double epsilon,
                                     std::size_t trials, std::uint64_t seed, std::size_t n) {
  const double gamma = static_cast<double>(
      gamma_bound(op_count, static_cast<long double>(delta), static_cast<long double>(epsilon)));
  PropositionReport report;
  report.trials = trials;
  report.gamma = gamma;

  // Sampling range wide enough that a delta gap between the top two draws
  // stays likely even for large delta.
  const double range = std::max(1.0, 8.0 * delta);
  std::vector<double> values(op_count);
  std::vector<double> crisp(op_count);

  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::mt19937_64 rng(splitmix64(seed ^ (0xA5A5A5A5A5A5A5A5ULL + trial)));
    std::uniform_real_distribution<double> uniform(0.0, range);
    double trial_worst = 0.0;
    for (std::size_t entry = 0; entry < n * n; ++entry) {
      // Rejection: resample this entry's values until a unique leader beats
      // every other value by at least delta.
      for (;;) {
        double best = -1.0, second = -1.0;
        for (std::size_t k = 0; k < op_count; ++k) {
          values[k] = uniform(rng);
          if (values[k] > best) {
            second = best;
            best = values[k];
          } else if (values[k] > second) {
            second = values[k];
          }
        }
        if (best - second >= delta) break;
      }
      crisp_entry(values, gamma, crisp);
      trial_worst = std::max(trial_worst, worst_pair_overlap(crisp));
    }
    if (trial_worst > epsilon) ++report.violations;
    report.worst_overlap = std::max(report.worst_overlap, trial_worst);
  }
  return report;
}

double adversarial_overlap(std::size_t op_count, double delta, double gamma) {
  std::vector<double> values(op_count, 0.0);
  values[0] = delta;
  std::vector<double> crisp;
  crisp_entry(values, gamma, crisp);
  return worst_pair_overlap(crisp);
}

}  // namespace ctxgcn::oracle
