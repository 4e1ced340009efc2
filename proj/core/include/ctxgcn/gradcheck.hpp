// Finite-difference verification of every analytic gradient in the model,
// run through the full constrain -> forward -> loss composition.

#ifndef CTXGCN_GRADCHECK_HPP
#define CTXGCN_GRADCHECK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ctxgcn/types.hpp"

namespace ctxgcn {

struct GradCheckGroup {
  std::string name;
  double max_rel = 0.0;
  std::size_t parameter_count = 0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;

  double overall() const;
  bool ok(double tolerance) const { return overall() < tolerance; }
};

// One random instance. Masked entries are not parameters and are skipped;
// fixed operator sets (HPM) contribute no operator gradient group.
struct GradCheckInstance {
  OperatorMode mode = OperatorMode::kOurs;
  ConstraintKind constraint = ConstraintKind::kNone;
  std::size_t op_count = 4;
  std::size_t node_count = 5;
  std::size_t signal_dim = 6;
  std::size_t channels = 3;
  std::size_t class_count = 3;
  bool differential = false;
  double gamma_eff = 5.0;  // moderate: huge gamma flattens gradients below the floor
  std::uint64_t seed = 7;
  double fd_step = 1e-5;
};

GradCheckReport run_gradcheck(const GradCheckInstance& instance);

}  // namespace ctxgcn

#endif  // CTXGCN_GRADCHECK_HPP
