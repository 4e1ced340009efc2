#include "ctxgcn/baselines.hpp"

#include <algorithm>
#include <numeric>

#include "ctxgcn/rng.hpp"

namespace ctxgcn {

SkeletonAdjacency SkeletonAdjacency::make(
    std::size_t joint_count, std::vector<std::pair<std::size_t, std::size_t>> edges) {
  for (auto& [u, v] : edges) {
    if (u == v)
      throw DataError("skeleton: self-loop at joint " + std::to_string(u));
    if (u >= joint_count || v >= joint_count)
      throw DataError("skeleton: edge (" + std::to_string(u) + ", " + std::to_string(v) +
                      ") exceeds joint count " + std::to_string(joint_count));
    if (u > v) std::swap(u, v);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return SkeletonAdjacency{joint_count, std::move(edges)};
}

SkeletonAdjacency SkeletonAdjacency::chain(std::size_t joint_count) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i + 1 < joint_count; ++i) edges.emplace_back(i, i + 1);
  return SkeletonAdjacency{joint_count, std::move(edges)};
}

Matrix SkeletonAdjacency::adjacency() const {
  Matrix a(joint_count, joint_count);
  for (const auto& [u, v] : edges) {
    a(u, v) = 1.0;
    a(v, u) = 1.0;
  }
  return a;
}

AdjacencyBasis power_map_basis(const Matrix& a, std::size_t count) {
  if (a.rows() != a.cols())
    throw DimensionError("power_map_basis: matrix is " + a.shape_str() + ", not square");
  if (count == 0) throw DimensionError("power_map_basis: needs at least one power");
  AdjacencyBasis basis;
  basis.constraint_tag = ConstraintKind::kNone;
  basis.mats.reserve(count);
  basis.mats.push_back(Matrix::identity(a.rows()));
  for (std::size_t k = 1; k < count; ++k) basis.mats.push_back(matmul(basis.mats[k - 1], a));
  return basis;
}

namespace {

// Union-find with path compression; union by size.
class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

}  // namespace

SkeletonAdjacency kruskal_spanning_tree(const SkeletonAdjacency& graph) {
  // graph.edges is already sorted (min, max) lexicographically; with unit
  // weights that order IS the deterministic tie-break.
  DisjointSets sets(graph.joint_count);
  std::vector<std::pair<std::size_t, std::size_t>> kept;
  for (const auto& [u, v] : graph.edges)
    if (sets.unite(u, v)) kept.push_back({u, v});
  return SkeletonAdjacency{graph.joint_count, std::move(kept)};
}

Matrix symmetrize(const Matrix& a) {
  if (a.rows() != a.cols())
    throw DimensionError("symmetrize: matrix is " + a.shape_str() + ", not square");
  const std::size_t n = a.rows();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = (a(i, j) + a(j, i)) / 2.0;
  return out;
}

Matrix column_stochastic_normalize(const Matrix& a) {
  if (a.rows() != a.cols())
    throw DimensionError("column_stochastic_normalize: matrix is " + a.shape_str() +
                         ", not square");
  const std::size_t n = a.rows();
  Matrix out = a;
  for (std::size_t j = 0; j < n; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (out(i, j) < 0.0)
        throw ConstraintError("column_stochastic_normalize: negative entry at (" +
                              std::to_string(i) + ", " + std::to_string(j) + ")");
      sum += out(i, j);
    }
    if (sum == 0.0)
      throw ConstraintError("column_stochastic_normalize: column " + std::to_string(j) +
                            " sums to zero (isolated node); add a self-loop first");
    for (std::size_t i = 0; i < n; ++i) out(i, j) /= sum;
  }
  return out;
}

OperatorSet build_operator_set(OperatorMode mode, const SkeletonAdjacency& skeleton,
                               const ConstraintSpec& spec, std::size_t op_count,
                               std::uint64_t seed) {
  spec.validate(op_count);
  if (op_count == 0) throw DimensionError("build_operator_set: needs at least one operator");
  if (skeleton.joint_count == 0)
    throw DimensionError("build_operator_set: skeleton has no joints");
  const std::size_t n = skeleton.joint_count;

  OperatorSet set;
  switch (mode) {
    case OperatorMode::kHpm: {
      // Constraints are baked into the base matrix, then powers are taken.
      SkeletonAdjacency shape = spec.orth() ? kruskal_spanning_tree(skeleton) : skeleton;
      Matrix base = shape.adjacency();
      if (spec.sym()) base = symmetrize(base);
      if (spec.stc()) {
        // Isolated nodes keep themselves as context: a unit self-loop before
        // normalizing, since the normalizer rejects zero-sum columns.
        for (std::size_t j = 0; j < n; ++j) {
          double sum = 0.0;
          for (std::size_t i = 0; i < n; ++i) sum += base(i, j);
          if (sum == 0.0) base(j, j) = 1.0;
        }
        base = column_stochastic_normalize(base);
      }
      set.basis.mats = power_map_basis(base, op_count).mats;
      set.fixed = true;
      break;
    }
    case OperatorMode::kLpm: {
      const AdjacencyBasis powers = power_map_basis(skeleton.adjacency(), op_count);
      set.basis.mats.reserve(op_count);
      set.basis.masks.reserve(op_count);
      for (std::size_t k = 0; k < op_count; ++k) {
        Matrix mask(n, n);
        for (std::size_t i = 0; i < n * n; ++i)
          mask.data()[i] = powers.mats[k].data()[i] != 0.0 ? 1.0 : 0.0;
        const double peak = max_abs(powers.mats[k]);
        Matrix init = powers.mats[k];
        if (peak > 0.0) init *= 1.0 / peak;
        set.basis.masks.push_back(std::move(mask));
        set.basis.mats.push_back(std::move(init));
      }
      set.fixed = false;
      break;
    }
    case OperatorMode::kOurs: {
      Rng rng(seed);
      set.basis.mats.assign(op_count, Matrix(n, n));
      for (std::size_t k = 0; k < op_count; ++k)
        for (double& v : set.basis.mats[k].data()) v = 0.5 * rng.normal();
      set.fixed = false;
      break;
    }
  }
  set.basis.validate();
  return set;
}

}  // namespace ctxgcn
