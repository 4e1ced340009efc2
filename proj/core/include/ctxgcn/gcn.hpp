// One aggregation + convolution block with a linear head:
//   H = f(sum_k B_k U^T W_k),  B_k = A_k or (I - A_k) per operator,
//   logits = mean_rows(H) . head + bias.

#ifndef CTXGCN_GCN_HPP
#define CTXGCN_GCN_HPP

#include <vector>

#include "ctxgcn/types.hpp"

namespace ctxgcn {

enum class Activation : std::uint8_t { kRelu, kIdentity };

struct ConvFilterBank {
  MatrixList w;                   // one s x C filter per operator
  Matrix head;                    // C x L
  std::vector<double> head_bias;  // L

  std::size_t op_count() const { return w.size(); }
  std::size_t signal_dim() const { return w.empty() ? 0 : w.front().rows(); }
  std::size_t channels() const { return w.empty() ? 0 : w.front().cols(); }
  std::size_t class_count() const { return head.cols(); }
};

// B_k U^T: the context of every node under one operator (n x s).
Matrix aggregate(const Matrix& a_k, const NodeSignal& u, bool differential);

// Forward pass context. Holds everything the backward pass reads; spent
// after one gcn_backward call.
struct GcnOutput {
  Matrix h;                     // n x C after activation
  std::vector<double> pooled;   // mean over nodes, C
  std::vector<double> logits;   // L

  // Saved inputs / intermediates for the backward pass.
  Matrix preact;
  MatrixList aggregated;        // per operator, n x s
  AdjacencyBasis ops;
  NodeSignal signal;
  ConvFilterBank filters;
  std::vector<bool> differential;
  Activation activation = Activation::kRelu;
  bool backward_done = false;
};

// differential is empty (all plain) or one flag per operator.
GcnOutput gcn_forward(const AdjacencyBasis& ops, const NodeSignal& u,
                      const ConvFilterBank& filters, Activation activation,
                      const std::vector<bool>& differential = {});

// -log softmax(logits)[label], computed through log-sum-exp.
double cross_entropy(const std::vector<double>& logits, std::size_t label);

// softmax(logits) - onehot(label): the loss gradient at the logits.
std::vector<double> cross_entropy_logit_grad(const std::vector<double>& logits,
                                             std::size_t label);

struct GcnGradients {
  MatrixList a;                   // per operator, n x n
  MatrixList w;                   // per operator, s x C
  Matrix head;                    // C x L
  std::vector<double> head_bias;  // L
  Matrix u;                       // s x n

  void add_in_place(const GcnGradients& other);
  void scale(double factor);
};

// Exact pullback of the forward pass. Consumes the context: a second call on
// the same GcnOutput raises StateError.
GcnGradients gcn_backward(GcnOutput& out, const std::vector<double>& logit_grad);

}  // namespace ctxgcn

#endif  // CTXGCN_GCN_HPP
