#include "ctxgcn/types.hpp"

namespace ctxgcn {

OperatorMode parse_operator_mode(const std::string& text) {
  if (text == "hpm" || text == "HPM") return OperatorMode::kHpm;
  if (text == "lpm" || text == "LPM") return OperatorMode::kLpm;
  if (text == "ours" || text == "OURS") return OperatorMode::kOurs;
  throw ConstraintError("unknown operator mode '" + text + "' (expected hpm, lpm or ours)");
}

std::string to_string(OperatorMode mode) {
  switch (mode) {
    case OperatorMode::kHpm: return "hpm";
    case OperatorMode::kLpm: return "lpm";
    case OperatorMode::kOurs: return "ours";
  }
  return "?";
}

ConstraintKind parse_constraint_kind(const std::string& text) {
  if (text == "none") return ConstraintKind::kNone;
  if (text == "sym") return ConstraintKind::kSym;
  if (text == "orth") return ConstraintKind::kOrth;
  if (text == "stc") return ConstraintKind::kStc;
  if (text == "sym+orth" || text == "orth+sym") return ConstraintKind::kSymOrth;
  if (text == "orth+stc" || text == "stc+orth") return ConstraintKind::kOrthStc;
  if (text == "sym+stc" || text == "stc+sym")
    throw ConstraintError("constraint 'sym+stc' is invalid: sym and stc are mutually exclusive");
  throw ConstraintError("unknown constraint '" + text +
                        "' (expected none, sym, orth, stc, sym+orth or orth+stc)");
}

std::string to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::kNone: return "none";
    case ConstraintKind::kSym: return "sym";
    case ConstraintKind::kOrth: return "orth";
    case ConstraintKind::kStc: return "stc";
    case ConstraintKind::kSymOrth: return "sym+orth";
    case ConstraintKind::kOrthStc: return "orth+stc";
  }
  return "?";
}

void ConstraintSpec::validate(std::size_t op_count) const {
  if (orth() && op_count < 2)
    throw ConstraintError("constraint '" + to_string(kind) + "' needs at least 2 operators, got " +
                          std::to_string(op_count));
  if (orth()) {
    if (!(crispmax.epsilon > 0.0 && crispmax.epsilon < 0.5))
      throw ConstraintError("crispmax epsilon must lie in (0, 0.5), got " +
                            std::to_string(crispmax.epsilon));
    if (!(crispmax.delta > 0.0))
      throw ConstraintError("crispmax delta must be positive, got " +
                            std::to_string(crispmax.delta));
    if (crispmax.anneal && crispmax.max_epochs == 0)
      throw ConstraintError("crispmax annealing needs max_epochs >= 1");
  }
}

void FreeBasis::validate() const {
  if (mats.empty()) throw DimensionError("free basis holds no operators");
  const std::size_t n = mats.front().rows();
  for (std::size_t k = 0; k < mats.size(); ++k) {
    if (mats[k].rows() != n || mats[k].cols() != n)
      throw DimensionError("free basis operator " + std::to_string(k) + " is " +
                           mats[k].shape_str() + ", expected " + std::to_string(n) + "x" +
                           std::to_string(n));
  }
  if (!masks.empty()) {
    if (masks.size() != mats.size())
      throw DimensionError("free basis has " + std::to_string(mats.size()) + " operators but " +
                           std::to_string(masks.size()) + " masks");
    for (std::size_t k = 0; k < masks.size(); ++k) {
      if (masks[k].rows() != n || masks[k].cols() != n)
        throw DimensionError("mask " + std::to_string(k) + " is " + masks[k].shape_str() +
                             ", expected " + std::to_string(n) + "x" + std::to_string(n));
      for (double v : masks[k].data())
        if (v != 0.0 && v != 1.0)
          throw ConstraintError("mask " + std::to_string(k) + " has non-binary entry " +
                                std::to_string(v));
      for (std::size_t i = 0; i < n * n; ++i)
        if (masks[k].data()[i] == 0.0 && mats[k].data()[i] != 0.0)
          throw ConstraintError("free basis operator " + std::to_string(k) +
                                " has a nonzero entry outside its mask");
    }
  }
}

NoisePolicy parse_noise_policy(const std::string& text) {
  if (text == "none") return NoisePolicy::kNone;
  if (text == "init_only") return NoisePolicy::kInitOnly;
  if (text == "per_step") return NoisePolicy::kPerStep;
  throw ConstraintError("unknown noise policy '" + text +
                        "' (expected none, init_only or per_step)");
}

std::string to_string(NoisePolicy policy) {
  switch (policy) {
    case NoisePolicy::kNone: return "none";
    case NoisePolicy::kInitOnly: return "init_only";
    case NoisePolicy::kPerStep: return "per_step";
  }
  return "?";
}

}  // namespace ctxgcn
