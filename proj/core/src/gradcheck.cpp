#include "ctxgcn/gradcheck.hpp"

#include <cmath>
#include <utility>

#include "ctxgcn/baselines.hpp"
#include "ctxgcn/gcn.hpp"
#include "ctxgcn/oracle.hpp"
#include "ctxgcn/reparam.hpp"
#include "ctxgcn/rng.hpp"

namespace ctxgcn {

double GradCheckReport::overall() const {
  double worst = 0.0;
  for (const auto& group : groups) worst = std::max(worst, group.max_rel);
  return worst;
}

namespace {

struct Instance {
  FreeBasis basis;
  bool fixed = false;
  ConvFilterBank filters;
  Matrix u;
  std::size_t label = 0;
};

// Entries of the free basis that are actual parameters: unmasked ones.
std::vector<double> flatten_basis(const FreeBasis& basis) {
  std::vector<double> flat;
  for (std::size_t k = 0; k < basis.op_count(); ++k)
    for (std::size_t i = 0; i < basis.mats[k].size(); ++i) {
      if (basis.has_mask() && basis.masks[k].data()[i] == 0.0) continue;
      flat.push_back(basis.mats[k].data()[i]);
    }
  return flat;
}

void unflatten_basis(FreeBasis& basis, const std::vector<double>& flat) {
  std::size_t next = 0;
  for (std::size_t k = 0; k < basis.op_count(); ++k)
    for (std::size_t i = 0; i < basis.mats[k].size(); ++i) {
      if (basis.has_mask() && basis.masks[k].data()[i] == 0.0) continue;
      basis.mats[k].data()[i] = flat[next++];
    }
}

std::vector<double> flatten_mats(const MatrixList& mats) {
  std::vector<double> flat;
  for (const Matrix& m : mats) flat.insert(flat.end(), m.data().begin(), m.data().end());
  return flat;
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckInstance& in) {
  ConstraintSpec spec;
  spec.kind = in.constraint;
  spec.crispmax.gamma_base = in.gamma_eff > 0.0 ? in.gamma_eff : 1.0;
  spec.crispmax.anneal = false;
  spec.validate(in.op_count);
  if (in.fd_step <= 0.0) throw ConstraintError("gradcheck: fd_step must be positive");

  Instance inst;
  {
    OperatorSet set = build_operator_set(in.mode, SkeletonAdjacency::chain(in.node_count),
                                         spec, in.op_count, in.seed);
    inst.basis = std::move(set.basis);
    inst.fixed = set.fixed;
  }
  Rng rng(in.seed ^ 0x9E3779B97F4A7C15ULL);
  inst.u = Matrix(in.signal_dim, in.node_count);
  for (double& v : inst.u.data()) v = rng.normal();
  inst.filters.w.assign(in.op_count, Matrix(in.signal_dim, in.channels));
  for (auto& w : inst.filters.w)
    for (double& v : w.data()) v = rng.normal() / std::sqrt(static_cast<double>(in.signal_dim));
  inst.filters.head = Matrix(in.channels, in.class_count);
  for (double& v : inst.filters.head.data()) v = rng.normal();
  inst.filters.head_bias.assign(in.class_count, 0.0);
  for (double& v : inst.filters.head_bias) v = 0.1 * rng.normal();
  inst.label = in.class_count - 1;

  const std::vector<bool> differential =
      in.differential ? std::vector<bool>(in.op_count, true) : std::vector<bool>{};
  const double gamma = in.gamma_eff;

  auto loss_of = [&spec, &differential, gamma](const Instance& probe) {
    AdjacencyBasis ops;
    if (probe.fixed) {
      ops.mats = probe.basis.mats;
      ops.constraint_tag = spec.kind;
    } else {
      ops = constrain(probe.basis, spec, gamma).output;
    }
    const GcnOutput out =
        gcn_forward(ops, NodeSignal{probe.u}, probe.filters, Activation::kRelu, differential);
    return cross_entropy(out.logits, probe.label);
  };

  // Analytic gradients through the composed pipeline.
  GcnGradients analytic;
  MatrixList analytic_free;
  {
    ConstrainContext ctx;
    AdjacencyBasis ops;
    if (inst.fixed) {
      ops.mats = inst.basis.mats;
      ops.constraint_tag = spec.kind;
    } else {
      ctx = constrain(inst.basis, spec, gamma);
      ops = ctx.output;
    }
    GcnOutput out =
        gcn_forward(ops, NodeSignal{inst.u}, inst.filters, Activation::kRelu, differential);
    analytic = gcn_backward(out, cross_entropy_logit_grad(out.logits, inst.label));
    if (!inst.fixed) analytic_free = constrain_vjp(ctx, spec, analytic.a);
  }

  GradCheckReport report;
  auto add_group = [&report](const std::string& name, const std::vector<double>& got,
                             const std::vector<double>& want) {
    GradCheckGroup group;
    group.name = name;
    group.parameter_count = got.size();
    group.max_rel = oracle::worst_rel_error(got, want, 1e-7).first;
    report.groups.push_back(std::move(group));
  };

  if (!inst.fixed) {
    const std::vector<double> point = flatten_basis(inst.basis);
    const auto fd = oracle::finite_diff_grad(
        [&inst, &loss_of](const std::vector<double>& flat) {
          Instance probe = inst;
          unflatten_basis(probe.basis, flat);
          return loss_of(probe);
        },
        point, in.fd_step);
    FreeBasis grad_holder = inst.basis;
    grad_holder.mats = analytic_free;
    add_group("a_hat", flatten_basis(grad_holder), fd);
  }

  {
    const std::vector<double> point = flatten_mats(inst.filters.w);
    const auto fd = oracle::finite_diff_grad(
        [&inst, &loss_of](const std::vector<double>& flat) {
          Instance probe = inst;
          std::size_t next = 0;
          for (auto& w : probe.filters.w)
            for (double& v : w.data()) v = flat[next++];
          return loss_of(probe);
        },
        point, in.fd_step);
    add_group("w", flatten_mats(analytic.w), fd);
  }

  {
    const auto fd = oracle::finite_diff_grad(
        [&inst, &loss_of](const std::vector<double>& flat) {
          Instance probe = inst;
          probe.filters.head.data().assign(flat.begin(), flat.end());
          return loss_of(probe);
        },
        inst.filters.head.data(), in.fd_step);
    add_group("head", analytic.head.data(), fd);
  }

  {
    const auto fd = oracle::finite_diff_grad(
        [&inst, &loss_of](const std::vector<double>& flat) {
          Instance probe = inst;
          probe.filters.head_bias = flat;
          return loss_of(probe);
        },
        inst.filters.head_bias, in.fd_step);
    add_group("bias", analytic.head_bias, fd);
  }

  {
    const auto fd = oracle::finite_diff_grad(
        [&inst, &loss_of](const std::vector<double>& flat) {
          Instance probe = inst;
          probe.u.data().assign(flat.begin(), flat.end());
          return loss_of(probe);
        },
        inst.u.data(), in.fd_step);
    add_group("u", analytic.u.data(), fd);
  }

  return report;
}

}  // namespace ctxgcn
