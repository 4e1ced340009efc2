#include "ctxgcn/gcn.hpp"

#include <cmath>

namespace ctxgcn {

Matrix aggregate(const Matrix& a_k, const NodeSignal& u, bool differential) {
  if (a_k.rows() != a_k.cols())
    throw DimensionError("aggregate: operator is " + a_k.shape_str() + ", not square");
  if (u.node_count() != a_k.rows())
    throw DimensionError("aggregate: operator is " + a_k.shape_str() + " but signal has " +
                         std::to_string(u.node_count()) + " nodes");
  if (!differential) return matmul(a_k, u.u.transposed());
  Matrix b = Matrix::identity(a_k.rows());
  b -= a_k;
  return matmul(b, u.u.transposed());
}

GcnOutput gcn_forward(const AdjacencyBasis& ops, const NodeSignal& u,
                      const ConvFilterBank& filters, Activation activation,
                      const std::vector<bool>& differential) {
  const std::size_t op_count = ops.op_count();
  if (op_count == 0) throw DimensionError("gcn_forward: empty operator basis");
  if (filters.op_count() != op_count)
    throw DimensionError("gcn_forward: " + std::to_string(op_count) + " operators but " +
                         std::to_string(filters.op_count()) + " filters");
  if (!differential.empty() && differential.size() != op_count)
    throw DimensionError("gcn_forward: " + std::to_string(differential.size()) +
                         " differential flags for " + std::to_string(op_count) + " operators");
  const std::size_t n = ops.node_count();
  const std::size_t s = u.signal_dim();
  const std::size_t channels = filters.channels();
  const std::size_t classes = filters.class_count();
  for (std::size_t k = 0; k < op_count; ++k) {
    if (filters.w[k].rows() != s || filters.w[k].cols() != channels)
      throw DimensionError("gcn_forward: filter " + std::to_string(k) + " is " +
                           filters.w[k].shape_str() + ", expected " + std::to_string(s) + "x" +
                           std::to_string(channels));
  }
  if (filters.head.rows() != channels)
    throw DimensionError("gcn_forward: head is " + filters.head.shape_str() + " but layer has " +
                         std::to_string(channels) + " channels");
  if (filters.head_bias.size() != classes)
    throw DimensionError("gcn_forward: head bias has " +
                         std::to_string(filters.head_bias.size()) + " entries for " +
                         std::to_string(classes) + " classes");

  GcnOutput out;
  out.ops = ops;
  out.signal = u;
  out.filters = filters;
  out.differential = differential;
  out.activation = activation;

  out.aggregated.reserve(op_count);
  out.preact = Matrix(n, channels);
  for (std::size_t k = 0; k < op_count; ++k) {
    const bool diff = !differential.empty() && differential[k];
    out.aggregated.push_back(aggregate(ops.mats[k], u, diff));
    out.preact += matmul(out.aggregated[k], filters.w[k]);
  }

  out.h = out.preact;
  if (activation == Activation::kRelu)
    for (double& v : out.h.data())
      if (v < 0.0) v = 0.0;

  out.pooled.assign(channels, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < channels; ++c) out.pooled[c] += out.h(i, c);
  for (double& v : out.pooled) v /= static_cast<double>(n);

  out.logits.assign(classes, 0.0);
  for (std::size_t l = 0; l < classes; ++l) {
    double acc = filters.head_bias[l];
    for (std::size_t c = 0; c < channels; ++c) acc += out.pooled[c] * filters.head(c, l);
    out.logits[l] = acc;
  }
  return out;
}

double cross_entropy(const std::vector<double>& logits, std::size_t label) {
  if (logits.empty()) throw DimensionError("cross_entropy: empty logits");
  if (label >= logits.size())
    throw DataError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                    std::to_string(logits.size()) + " classes");
  double peak = logits[0];
  for (double v : logits) peak = std::max(peak, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - peak);
  return peak + std::log(sum) - logits[label];
}

std::vector<double> cross_entropy_logit_grad(const std::vector<double>& logits,
                                             std::size_t label) {
  if (logits.empty()) throw DimensionError("cross_entropy_logit_grad: empty logits");
  if (label >= logits.size())
    throw DataError("cross_entropy_logit_grad: label " + std::to_string(label) +
                    " out of range for " + std::to_string(logits.size()) + " classes");
  double peak = logits[0];
  for (double v : logits) peak = std::max(peak, v);
  double sum = 0.0;
  std::vector<double> grad(logits.size());
  for (std::size_t l = 0; l < logits.size(); ++l) {
    grad[l] = std::exp(logits[l] - peak);
    sum += grad[l];
  }
  for (double& v : grad) v /= sum;
  grad[label] -= 1.0;
  return grad;
}

void GcnGradients::add_in_place(const GcnGradients& other) {
  for (std::size_t k = 0; k < a.size(); ++k) a[k] += other.a[k];
  for (std::size_t k = 0; k < w.size(); ++k) w[k] += other.w[k];
  head += other.head;
  for (std::size_t l = 0; l < head_bias.size(); ++l) head_bias[l] += other.head_bias[l];
  u += other.u;
}

void GcnGradients::scale(double factor) {
  for (auto& m : a) m *= factor;
  for (auto& m : w) m *= factor;
  head *= factor;
  for (double& v : head_bias) v *= factor;
  u *= factor;
}

GcnGradients gcn_backward(GcnOutput& out, const std::vector<double>& logit_grad) {
  if (out.backward_done)
    throw StateError("gcn_backward: context already consumed by an earlier call");
  out.backward_done = true;
  if (logit_grad.size() != out.logits.size())
    throw DimensionError("gcn_backward: logit gradient has " +
                         std::to_string(logit_grad.size()) + " entries for " +
                         std::to_string(out.logits.size()) + " classes");

  const std::size_t op_count = out.ops.op_count();
  const std::size_t n = out.ops.node_count();
  const std::size_t s = out.signal.signal_dim();
  const std::size_t channels = out.filters.channels();
  const std::size_t classes = out.filters.class_count();

  GcnGradients g;
  g.head_bias = logit_grad;
  g.head = Matrix(channels, classes);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t l = 0; l < classes; ++l) g.head(c, l) = out.pooled[c] * logit_grad[l];

  std::vector<double> grad_pooled(channels, 0.0);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t l = 0; l < classes; ++l)
      grad_pooled[c] += out.filters.head(c, l) * logit_grad[l];

  // Mean pooling spreads the channel gradient uniformly over nodes; the
  // activation gate then zeroes the off cells.
  Matrix grad_pre(n, channels);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < channels; ++c) {
      double v = grad_pooled[c] / static_cast<double>(n);
      if (out.activation == Activation::kRelu && out.preact(i, c) <= 0.0) v = 0.0;
      grad_pre(i, c) = v;
    }

  g.a.assign(op_count, Matrix(n, n));
  g.w.reserve(op_count);
  g.u = Matrix(s, out.signal.node_count());
  for (std::size_t k = 0; k < op_count; ++k) {
    const bool diff = !out.differential.empty() && out.differential[k];
    g.w.push_back(matmul(out.aggregated[k].transposed(), grad_pre));
    const Matrix grad_agg = matmul(grad_pre, out.filters.w[k].transposed());  // n x s
    g.a[k] = matmul(grad_agg, out.signal.u);
    if (diff) g.a[k] *= -1.0;
    const Matrix tied = matmul(grad_agg.transposed(), out.ops.mats[k]);  // s x n
    if (diff) {
      g.u += grad_agg.transposed();
      g.u -= tied;
    } else {
      g.u += tied;
    }
  }
  return g;
}

}  // namespace ctxgcn
