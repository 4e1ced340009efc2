// Handcrafted and masked operator bases built from a skeleton graph.

#ifndef CTXGCN_BASELINES_HPP
#define CTXGCN_BASELINES_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "ctxgcn/types.hpp"

namespace ctxgcn {

// Undirected simple graph over joints 0..joint_count-1. Edges are stored
// with the smaller endpoint first, deduplicated, sorted.
struct SkeletonAdjacency {
  std::size_t joint_count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;

  // Normalizes edge order, drops duplicates, rejects self-loops and
  // out-of-range endpoints.
  static SkeletonAdjacency make(std::size_t joint_count,
                                std::vector<std::pair<std::size_t, std::size_t>> edges);

  // 0 - 1 - 2 - ... - (joint_count-1).
  static SkeletonAdjacency chain(std::size_t joint_count);

  // Binary symmetric matrix with zero diagonal.
  Matrix adjacency() const;
};

// {A^0, A^1, ..., A^(count-1)} with A^0 = I, each power formed by one more
// right multiplication. Tagged kNone: powers promise no constraint on their
// own.
AdjacencyBasis power_map_basis(const Matrix& a, std::size_t count);

// Minimum spanning forest under unit weights. Edges are scanned in
// (min endpoint, max endpoint) lexicographic order, so ties break
// deterministically. Output spans every connected component.
SkeletonAdjacency kruskal_spanning_tree(const SkeletonAdjacency& graph);

// (A + A^T) / 2.
Matrix symmetrize(const Matrix& a);

// A D(A)^-1 with D(A) = diag of column sums. Requires nonnegative entries
// and positive column sums; an all-zero column (isolated node) is rejected,
// the caller must add a self-loop first.
Matrix column_stochastic_normalize(const Matrix& a);

struct OperatorSet {
  FreeBasis basis;
  bool fixed = false;  // true: the basis is used as-is and never updated
};

// Assembles the free parameters for one run.
//   kHpm:  powers of the skeleton adjacency, constraint-transformed first
//          (orth -> Kruskal tree restriction, sym -> symmetrize,
//          stc -> column-stochastic normalize); fixed, no masks.
//   kLpm:  one mask per operator = support(A^k); entries initialized to the
//          power values rescaled to max 1 per operator.
//   kOurs: dense, initialized from the seed; no masks.
OperatorSet build_operator_set(OperatorMode mode, const SkeletonAdjacency& skeleton,
                               const ConstraintSpec& spec, std::size_t op_count,
                               std::uint64_t seed);

}  // namespace ctxgcn

#endif  // CTXGCN_BASELINES_HPP
