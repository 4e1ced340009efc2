// Independent reference implementations used to validate the main library.
//
// Nothing in this header (or its .cpp) may include or link against the rest
// of the library: the whole point is an independent code path. Everything
// works on raw row-major buffers and plain loops, written for clarity over
// speed. The brute-force evaluators are for test scale only and enforce
// n <= 8 and op_count <= 8 so they cannot sneak into a training path; the
// graph walkers and proposition_trials are sized for acceptance sweeps.

#ifndef CTXGCN_ORACLE_HPP
#define CTXGCN_ORACLE_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace ctxgcn::oracle {

// Central finite differences: g_i = (f(x + h e_i) - f(x - h e_i)) / (2h).
std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& point, double step = 1e-5);

// |a - b| <= max(rel_tol * max(|a|, |b|), abs_floor)
bool close(double a, double b, double rel_tol, double abs_floor);

// Worst mismatch between two gradient vectors under the tolerance above.
// Returns (max relative error, index of the worst entry); the relative error
// of a pair within the absolute floor counts as zero.
std::pair<double, std::size_t> worst_rel_error(const std::vector<double>& got,
                                               const std::vector<double>& want,
                                               double abs_floor = 1e-7);

// Plain nested-loop evaluation of one aggregation layer:
//   H = f(sum_k A_k U^T W_k), optionally with (I - A_k) U^T per operator.
// a: op_count matrices, each n*n row-major. u: s*n row-major. w: op_count
// matrices, each s*c row-major. differential: empty or one flag per operator.
// relu false means identity activation. Returns H, n*c row-major.
std::vector<double> naive_gcn(const std::vector<std::vector<double>>& a,
                              const std::vector<double>& u, std::size_t n, std::size_t s,
                              const std::vector<std::vector<double>>& w, std::size_t c,
                              bool relu, const std::vector<bool>& differential = {});

// Repeated naive multiplication: A^power for an n x n row-major matrix,
// accumulating each inner product in ascending index order.
std::vector<double> naive_matrix_power(const std::vector<double>& a, std::size_t n,
                                       std::size_t power);

// Closed-form temperature bound evaluated in extended precision:
//   (1/delta) * ln(K*sqrt(1-2eps) / (1 - sqrt(1-2eps)) + 1)
long double gamma_bound(std::size_t op_count, long double delta, long double epsilon);

// Walk connected components / cycle structure with BFS (not union-find, so
// it cannot share a bug with a union-find implementation under test).
// edges hold undirected pairs over vertices 0..n-1.
std::size_t component_count(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges);
bool is_acyclic(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges);

// Monte Carlo check of the separation proposition. Each trial samples an
// op_count x n x n entry grid where every (i, j) has a unique leader ahead of
// the runners-up by at least delta (rejection sampling, per-trial seed derived
// from the master seed), applies the crisp map at gamma = gamma_bound(...),
// and measures the worst pairwise entry overlap max_ij (A_k . A_k')_ij.
struct PropositionReport {
  std::size_t trials = 0;
  std::size_t violations = 0;   // trials whose worst overlap exceeded epsilon
  double worst_overlap = 0.0;   // over all trials
  double gamma = 0.0;           // temperature actually used
};

PropositionReport proposition_trials(std::size_t op_count, double delta, double epsilon,
                                     std::size_t trials, std::uint64_t seed, std::size_t n = 8);

// Worst pairwise overlap of the crisp map on the adversarial entry pattern
// (delta, 0, ..., 0): the configuration that meets the separation premise
// with no slack.
double adversarial_overlap(std::size_t op_count, double delta, double gamma);

}  // namespace ctxgcn::oracle

#endif  // CTXGCN_ORACLE_HPP
