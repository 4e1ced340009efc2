#include "ctxgcn/reparam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ctxgcn {

namespace {

thread_local std::uint64_t g_crispmax_vjp_ops = 0;

// Column softmax restricted to the support of mask (nullptr means dense).
// Excluded entries get exactly zero and take no mass.
Matrix column_softmax(const Matrix& a_hat, const Matrix* mask) {
  const std::size_t n_rows = a_hat.rows();
  const std::size_t n_cols = a_hat.cols();
  Matrix out(n_rows, n_cols);
  for (std::size_t j = 0; j < n_cols; ++j) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_rows; ++i) {
      if (mask && (*mask)(i, j) == 0.0) continue;
      peak = std::max(peak, a_hat(i, j));
    }
    if (peak == -std::numeric_limits<double>::infinity())
      throw ConstraintError("stochastic map: column " + std::to_string(j) +
                            " has empty mask support");
    double denom = 0.0;
    for (std::size_t i = 0; i < n_rows; ++i) {
      if (mask && (*mask)(i, j) == 0.0) continue;
      const double e = std::exp(a_hat(i, j) - peak);
      out(i, j) = e;
      denom += e;
    }
    for (std::size_t i = 0; i < n_rows; ++i) {
      if (mask && (*mask)(i, j) == 0.0) continue;
      out(i, j) /= denom;
    }
  }
  return out;
}

}  // namespace

Matrix stochastic_forward(const Matrix& a_hat) {
  if (!a_hat.is_finite())
    throw NumericError("stochastic_forward: input has non-finite entries");
  return column_softmax(a_hat, nullptr);
}

Matrix stochastic_vjp(const Matrix& a, const Matrix& grad_a) {
  if (!a.same_shape(grad_a))
    throw DimensionError("stochastic_vjp: output " + a.shape_str() + " vs gradient " +
                         grad_a.shape_str());
  const std::size_t n_rows = a.rows();
  const std::size_t n_cols = a.cols();
  Matrix out(n_rows, n_cols);
  for (std::size_t j = 0; j < n_cols; ++j) {
    double dot = 0.0;
    for (std::size_t p = 0; p < n_rows; ++p) dot += grad_a(p, j) * a(p, j);
    for (std::size_t i = 0; i < n_rows; ++i) out(i, j) = a(i, j) * (grad_a(i, j) - dot);
  }
  return out;
}

AdjacencyBasis crispmax_forward(const FreeBasis& a_hats, double gamma_eff) {
  a_hats.validate();
  const std::size_t op_count = a_hats.op_count();
  if (op_count < 2)
    throw ConstraintError("crispmax needs at least 2 operators, got " + std::to_string(op_count));
  if (!(gamma_eff > 0.0))
    throw ConstraintError("crispmax temperature must be positive, got " +
                          std::to_string(gamma_eff));
  for (std::size_t k = 0; k < op_count; ++k)
    if (!a_hats.mats[k].is_finite())
      throw NumericError("crispmax_forward: operator " + std::to_string(k) +
                         " has non-finite entries");

  const std::size_t n = a_hats.node_count();
  AdjacencyBasis basis;
  basis.constraint_tag = ConstraintKind::kOrth;
  basis.mats.assign(op_count, Matrix(n, n));
  const bool masked = a_hats.has_mask();

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      // Softmax across the operators contesting this entry.
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < op_count; ++k) {
        if (masked && a_hats.masks[k](i, j) == 0.0) continue;
        peak = std::max(peak, gamma_eff * a_hats.mats[k](i, j));
      }
      if (peak == -std::numeric_limits<double>::infinity()) continue;  // no operator covers (i,j)
      double denom = 0.0;
      for (std::size_t k = 0; k < op_count; ++k) {
        if (masked && a_hats.masks[k](i, j) == 0.0) continue;
        const double e = std::exp(gamma_eff * a_hats.mats[k](i, j) - peak);
        basis.mats[k](i, j) = e;
        denom += e;
      }
      for (std::size_t k = 0; k < op_count; ++k) {
        if (masked && a_hats.masks[k](i, j) == 0.0) continue;
        basis.mats[k](i, j) /= denom;
      }
    }
  }
  return basis;
}

MatrixList crispmax_vjp(const AdjacencyBasis& a, double gamma_eff, const MatrixList& grad_a) {
  const std::size_t op_count = a.op_count();
  if (grad_a.size() != op_count)
    throw DimensionError("crispmax_vjp: " + std::to_string(op_count) + " operators but " +
                         std::to_string(grad_a.size()) + " gradients");
  const std::size_t n = a.node_count();
  for (std::size_t k = 0; k < op_count; ++k)
    if (!grad_a[k].same_shape(a.mats[k]))
      throw DimensionError("crispmax_vjp: gradient " + std::to_string(k) + " is " +
                           grad_a[k].shape_str() + ", operator is " + a.mats[k].shape_str());

  // Two sweeps over the K n^2 stored entries; the (K n^2)^2 Jacobian never
  // exists in memory.
  Matrix dots(n, n);
  for (std::size_t k = 0; k < op_count; ++k) {
    for (std::size_t i = 0; i < n * n; ++i) {
      dots.data()[i] += grad_a[k].data()[i] * a.mats[k].data()[i];
      ++g_crispmax_vjp_ops;
    }
  }
  MatrixList out(op_count, Matrix(n, n));
  for (std::size_t k = 0; k < op_count; ++k) {
    for (std::size_t i = 0; i < n * n; ++i) {
      out[k].data()[i] =
          gamma_eff * a.mats[k].data()[i] * (grad_a[k].data()[i] - dots.data()[i]);
      ++g_crispmax_vjp_ops;
    }
  }
  return out;
}

double gamma_lower_bound(std::size_t op_count, double delta, double epsilon) {
  if (op_count < 2)
    throw ConstraintError("gamma_lower_bound: needs at least 2 operators, got " +
                          std::to_string(op_count));
  if (!(delta > 0.0))
    throw ConstraintError("gamma_lower_bound: delta must be positive, got " +
                          std::to_string(delta));
  if (!(epsilon > 0.0 && epsilon < 0.5))
    throw ConstraintError("gamma_lower_bound: epsilon must lie in (0, 0.5), got " +
                          std::to_string(epsilon));
  const double root = std::sqrt(1.0 - 2.0 * epsilon);
  return std::log(static_cast<double>(op_count) * root / (1.0 - root) + 1.0) / delta;
}

OrthogonalityReport check_epsilon_orthogonality(const AdjacencyBasis& a, double epsilon) {
  const std::size_t op_count = a.op_count();
  if (op_count < 2)
    throw ConstraintError("check_epsilon_orthogonality: needs at least 2 operators, got " +
                          std::to_string(op_count));
  OrthogonalityReport report;
  for (std::size_t k = 0; k + 1 < op_count; ++k) {
    if (!a.mats[k].same_shape(a.mats[k + 1]))
      throw DimensionError("check_epsilon_orthogonality: operator shapes differ");
    for (std::size_t k2 = k + 1; k2 < op_count; ++k2)
      for (std::size_t i = 0; i < a.mats[k].size(); ++i)
        report.max_overlap =
            std::max(report.max_overlap, a.mats[k].data()[i] * a.mats[k2].data()[i]);
  }
  report.ok = report.max_overlap <= epsilon;
  return report;
}

Matrix symmetry_forward(const Matrix& a_hat) {
  if (a_hat.rows() != a_hat.cols())
    throw DimensionError("symmetry_forward: matrix is " + a_hat.shape_str() + ", not square");
  const std::size_t n = a_hat.rows();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = (a_hat(i, j) + a_hat(j, i)) / 2.0;
  return out;
}

Matrix symmetry_vjp(const Matrix& grad_a) { return symmetry_forward(grad_a); }

double anneal_gamma(const CrispmaxConfig& config, std::size_t epoch) {
  if (!(config.gamma_base > 0.0))
    throw ConstraintError("anneal_gamma: gamma_base must be positive, got " +
                          std::to_string(config.gamma_base));
  if (!config.anneal) return config.gamma_base;
  if (config.max_epochs == 0) throw ConstraintError("anneal_gamma: max_epochs must be >= 1");
  const std::size_t e = std::clamp<std::size_t>(epoch, 1, config.max_epochs);
  return config.gamma_base * (static_cast<double>(e) / static_cast<double>(config.max_epochs));
}

ConstrainContext constrain(const FreeBasis& a_hats, const ConstraintSpec& spec,
                           double gamma_eff) {
  a_hats.validate();
  spec.validate(a_hats.op_count());

  ConstrainContext ctx;
  ctx.kind = spec.kind;
  ctx.gamma_eff = spec.orth() ? gamma_eff : 0.0;
  ctx.masks = a_hats.masks;

  const std::size_t op_count = a_hats.op_count();
  ctx.premapped.reserve(op_count);
  for (std::size_t k = 0; k < op_count; ++k) {
    if (spec.sym()) {
      ctx.premapped.push_back(symmetry_forward(a_hats.mats[k]));
    } else if (spec.stc()) {
      if (!a_hats.mats[k].is_finite())
        throw NumericError("constrain: operator " + std::to_string(k) +
                           " has non-finite entries");
      ctx.premapped.push_back(
          column_softmax(a_hats.mats[k], a_hats.has_mask() ? &a_hats.masks[k] : nullptr));
    } else {
      ctx.premapped.push_back(a_hats.mats[k]);
    }
  }

  if (spec.orth()) {
    FreeBasis staged;
    staged.mats = ctx.premapped;
    staged.masks = a_hats.masks;
    ctx.output = crispmax_forward(staged, gamma_eff);
  } else {
    ctx.output.mats = ctx.premapped;
  }
  ctx.output.constraint_tag = spec.kind;
  return ctx;
}

MatrixList constrain_vjp(const ConstrainContext& ctx, const ConstraintSpec& spec,
                         const MatrixList& grad_a) {
  if (spec.kind != ctx.kind)
    throw StateError("constrain_vjp: spec '" + to_string(spec.kind) +
                     "' does not match context '" + to_string(ctx.kind) + "'");
  const std::size_t op_count = ctx.output.op_count();
  if (grad_a.size() != op_count)
    throw DimensionError("constrain_vjp: " + std::to_string(op_count) + " operators but " +
                         std::to_string(grad_a.size()) + " gradients");

  // Outermost map first.
  MatrixList grad =
      spec.orth() ? crispmax_vjp(ctx.output, ctx.gamma_eff, grad_a) : grad_a;

  for (std::size_t k = 0; k < op_count; ++k) {
    if (spec.sym()) {
      grad[k] = symmetry_vjp(grad[k]);
    } else if (spec.stc()) {
      grad[k] = stochastic_vjp(ctx.premapped[k], grad[k]);
    }
    // stc and crispmax pullbacks vanish on masked-out entries by construction
    // (the forward output is zero there); identity and sym need the mask
    // applied explicitly.
    if (!ctx.masks.empty() && !(spec.stc() || spec.orth()))
      grad[k] = hadamard(grad[k], ctx.masks[k]);
  }
  return grad;
}

namespace detail {
std::uint64_t crispmax_vjp_ops() { return g_crispmax_vjp_ops; }
void reset_crispmax_vjp_ops() { g_crispmax_vjp_ops = 0; }
}  // namespace detail

}  // namespace ctxgcn
