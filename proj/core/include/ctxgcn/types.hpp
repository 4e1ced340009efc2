// Shared value types for context-operator learning.

#ifndef CTXGCN_TYPES_HPP
#define CTXGCN_TYPES_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ctxgcn/matrix.hpp"

namespace ctxgcn {

using MatrixList = std::vector<Matrix>;

// Graph signal: column j is the descriptor psi(v_j) of node j, so u is s x n.
struct NodeSignal {
  Matrix u;

  std::size_t signal_dim() const { return u.rows(); }
  std::size_t node_count() const { return u.cols(); }
};

// How the operator basis is obtained (handcrafted powers, masked learning,
// or dense learning).
enum class OperatorMode : std::uint8_t { kHpm, kLpm, kOurs };

OperatorMode parse_operator_mode(const std::string& text);
std::string to_string(OperatorMode mode);

// Which constraints apply to the learned operators. sym and stc are mutually
// exclusive; orth alone or combined with exactly one of the other two.
enum class ConstraintKind : std::uint8_t {
  kNone,
  kSym,
  kOrth,
  kStc,
  kSymOrth,
  kOrthStc,
};

ConstraintKind parse_constraint_kind(const std::string& text);
std::string to_string(ConstraintKind kind);

inline bool has_sym(ConstraintKind k) {
  return k == ConstraintKind::kSym || k == ConstraintKind::kSymOrth;
}
inline bool has_orth(ConstraintKind k) {
  return k == ConstraintKind::kOrth || k == ConstraintKind::kSymOrth ||
         k == ConstraintKind::kOrthStc;
}
inline bool has_stc(ConstraintKind k) {
  return k == ConstraintKind::kStc || k == ConstraintKind::kOrthStc;
}

// Temperature schedule for the crispmax map. gamma_base <= 0 means "derive
// from gamma_lower_bound(K, delta, epsilon) when the operator count is known".
struct CrispmaxConfig {
  double gamma_base = 0.0;
  double epsilon = 0.01;   // orthogonality tolerance, in (0, 0.5)
  double delta = 0.01;     // assumed per-entry separation, > 0
  bool anneal = true;
  std::size_t max_epochs = 3000;
};

struct ConstraintSpec {
  ConstraintKind kind = ConstraintKind::kNone;
  CrispmaxConfig crispmax;

  bool sym() const { return has_sym(kind); }
  bool orth() const { return has_orth(kind); }
  bool stc() const { return has_stc(kind); }

  // Throws ConstraintError when the spec cannot apply to op_count operators
  // or its crispmax parameters are out of range.
  void validate(std::size_t op_count) const;
};

// Unconstrained parameter matrices {A_hat_k}, all n x n. masks is either
// empty (dense) or holds one 0/1 matrix per operator; masked-out entries of
// mats are kept at exactly zero.
struct FreeBasis {
  MatrixList mats;
  MatrixList masks;

  std::size_t op_count() const { return mats.size(); }
  std::size_t node_count() const { return mats.empty() ? 0 : mats.front().rows(); }
  bool has_mask() const { return !masks.empty(); }

  // Throws DimensionError unless every matrix (and mask) is n x n with a
  // consistent n; throws ConstraintError if a mask entry is not 0/1.
  void validate() const;
};

// Constrained operators {A_k} actually used by the layer, tagged with the
// constraint family they satisfy.
struct AdjacencyBasis {
  MatrixList mats;
  ConstraintKind constraint_tag = ConstraintKind::kNone;

  std::size_t op_count() const { return mats.size(); }
  std::size_t node_count() const { return mats.empty() ? 0 : mats.front().rows(); }
};

enum class NoisePolicy : std::uint8_t { kNone, kInitOnly, kPerStep };

NoisePolicy parse_noise_policy(const std::string& text);
std::string to_string(NoisePolicy policy);

}  // namespace ctxgcn

#endif  // CTXGCN_TYPES_HPP
