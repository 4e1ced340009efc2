// Reparametrizations that keep learned aggregation operators feasible.
//
// Stochasticity: column softmax A_ij = exp(Ahat_ij) / sum_q exp(Ahat_qj).
// Orthogonality: crispmax across operators,
//   A_k,ij = exp(gamma Ahat_k,ij) / sum_r exp(gamma Ahat_r,ij),
// which drives pairwise entry overlaps (A_k . A_k')_ij below epsilon once
// gamma reaches gamma_lower_bound and entries are delta-separated.
// Symmetry: A = (Ahat + Ahat^T) / 2.
//
// Composition order is fixed: the per-operator pre-map (identity, sym or stc)
// runs first, then crispmax across operators when orth is active. VJPs apply
// in reverse. Jacobians are never materialized; each VJP touches only the
// structurally nonzero partials.

#ifndef CTXGCN_REPARAM_HPP
#define CTXGCN_REPARAM_HPP

#include <cstdint>

#include "ctxgcn/types.hpp"

namespace ctxgcn {

// Column softmax. Stabilized by per-column max subtraction, so any finite
// input is safe; non-finite input raises NumericError. Output entries lie in
// (0, 1] and every column sums to 1 up to roundoff.
Matrix stochastic_forward(const Matrix& a_hat);

// Pullback through stochastic_forward. a must be the forward output.
//   grad_hat_ij = A_ij * (grad_ij - sum_p grad_pj * A_pj)
Matrix stochastic_vjp(const Matrix& a, const Matrix& grad_a);

// Crispmax across operators at temperature gamma_eff (> 0). Needs at least
// two operators. When the basis carries masks, each entry is contested only
// by the operators whose mask covers it; uncovered entries stay zero.
AdjacencyBasis crispmax_forward(const FreeBasis& a_hats, double gamma_eff);

// Pullback through crispmax_forward. a must be the forward output at the
// same gamma_eff. Touches exactly the K n^2 structurally nonzero partials:
//   grad_hat_k,ij = gamma * A_k,ij * (grad_k,ij - sum_r grad_r,ij * A_r,ij)
MatrixList crispmax_vjp(const AdjacencyBasis& a, double gamma_eff, const MatrixList& grad_a);

// Smallest temperature that guarantees epsilon-orthogonality under
// delta-separated entries:
//   (1/delta) * ln(K sqrt(1-2 eps) / (1 - sqrt(1-2 eps)) + 1)
double gamma_lower_bound(std::size_t op_count, double delta, double epsilon);

struct OrthogonalityReport {
  double max_overlap = 0.0;  // max over operator pairs and entries of (A_k . A_k')_ij
  bool ok = true;            // max_overlap <= epsilon
};

OrthogonalityReport check_epsilon_orthogonality(const AdjacencyBasis& a, double epsilon);

// A = (Ahat + Ahat^T) / 2. Output is exactly symmetric (commutative adds).
Matrix symmetry_forward(const Matrix& a_hat);

// Pullback through symmetry_forward: (grad + grad^T) / 2.
Matrix symmetry_vjp(const Matrix& grad_a);

// Effective temperature at a given epoch: gamma_base * epoch / max_epochs
// when annealing, clamped to [gamma_base / max_epochs, gamma_base] so epoch 0
// never yields zero temperature. Without annealing, gamma_base.
double anneal_gamma(const CrispmaxConfig& config, std::size_t epoch);

// Everything needed to run the matching VJP later.
struct ConstrainContext {
  ConstraintKind kind = ConstraintKind::kNone;
  double gamma_eff = 0.0;
  MatrixList premapped;   // per-operator pre-map outputs (the crispmax inputs)
  MatrixList masks;       // copied from the free basis; empty when dense
  AdjacencyBasis output;
};

// Full constraint pipeline: validate, pre-map each operator, then crispmax
// when orth is active. gamma_eff is ignored unless the spec includes orth.
ConstrainContext constrain(const FreeBasis& a_hats, const ConstraintSpec& spec, double gamma_eff);

// Pullback through constrain: crispmax_vjp first (outermost map), then the
// per-operator pre-map VJP. spec must match the context (StateError if not).
// Masked entries of the result are exactly zero.
MatrixList constrain_vjp(const ConstrainContext& ctx, const ConstraintSpec& spec,
                         const MatrixList& grad_a);

namespace detail {
// Operation counter for the crispmax VJP, used by tests to pin the O(K n^2)
// cost contract. Counts entry visits; one crispmax_vjp call adds 2 K n^2.
std::uint64_t crispmax_vjp_ops();
void reset_crispmax_vjp_ops();
}  // namespace detail

}  // namespace ctxgcn

#endif  // CTXGCN_REPARAM_HPP
