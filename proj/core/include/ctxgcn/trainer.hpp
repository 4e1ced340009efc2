// Training loop, ablation grid, and model artifact IO.

#ifndef CTXGCN_TRAINER_HPP
#define CTXGCN_TRAINER_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ctxgcn/baselines.hpp"
#include "ctxgcn/data.hpp"
#include "ctxgcn/gcn.hpp"
#include "ctxgcn/types.hpp"

namespace ctxgcn {

struct TrainConfig {
  std::size_t epochs = 3000;
  std::size_t batch_size = 200;  // clipped to the training set size
  double momentum = 0.9;
  double lr0 = 0.1;
  double lr_factor = 0.99;
  ConstraintKind constraint = ConstraintKind::kNone;
  OperatorMode mode = OperatorMode::kOurs;
  std::size_t k = 4;        // operator count
  double gamma_base = 0.0;  // <= 0: use gamma_lower_bound(k, delta, epsilon)
  double epsilon = 0.01;
  double delta = 0.01;
  double noise_std = 1e-4;
  NoisePolicy noise_policy = NoisePolicy::kPerStep;
  std::size_t m = 8;  // temporal chunks
  std::uint64_t seed = 0;
  std::size_t channels = 16;
  bool differential = false;  // (I - A_k) U^T aggregation for every operator
  bool anneal = true;
  bool dry_run = false;  // emit epoch-0 metrics, no updates

  // Resolved crispmax settings (gamma_base filled in from the bound when
  // unset); throws if the combination is invalid for k operators.
  ConstraintSpec constraint_spec() const;
};

// One metrics record per epoch, written as a JSON line. gamma_eff is zero
// when orth is inactive; max_overlap is present only when orth is active.
struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double lr = 0.0;
  double gamma_eff = 0.0;
  std::optional<double> max_overlap;

  std::string to_json_line() const;  // byte-stable for identical runs
};

struct LabeledSample {
  Matrix u;  // s x n chunked descriptor
  std::size_t label = 0;
};

struct TrainTask {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
  std::vector<std::string> classes;
  SkeletonAdjacency skeleton;
};

// Chunk sequences into descriptors and index labels over the union of both
// sides' label sets.
TrainTask make_task(const std::vector<SkeletonSequence>& train_sequences,
                    const std::vector<SkeletonSequence>& test_sequences,
                    std::size_t chunk_count, const SkeletonAdjacency& skeleton);

// Last-difference loss speeds: the learning rate shrinks by lr_factor when
// the speed of change of the loss increased, grows by 1/lr_factor otherwise,
// clamped to [1e-8, 1]. Needs three loss values for the first comparison;
// until then prev_lr passes through.
double adapt_lr(double prev_lr, const std::vector<double>& loss_history, double lr_factor);

// Classical momentum: velocity = momentum * velocity + grad;
// params -= lr * velocity. Entries whose gradient is pinned at zero (masked)
// never move.
void sgd_step(Matrix& params, Matrix& velocity, const Matrix& grad, double lr, double momentum);
void sgd_step(std::vector<double>& params, std::vector<double>& velocity,
              const std::vector<double>& grad, double lr, double momentum);

struct TrainResult {
  FreeBasis free_basis;      // final unconstrained parameters (HPM: the fixed powers)
  AdjacencyBasis operators;  // constrained operators at the final temperature
  ConvFilterBank filters;
  std::vector<std::string> classes;
  std::vector<EpochMetrics> history;
  bool fixed_operators = false;
  double final_gamma = 0.0;
  TrainConfig config;
};

// Full run. Emits one metrics line per epoch to metrics_out (when non-null),
// flushed immediately. Identical config + seed + data give a byte-identical
// stream. Raises NumericError naming the epoch if the loss leaves the finite
// range.
TrainResult train(const TrainConfig& config, const TrainTask& task,
                  std::ostream* metrics_out = nullptr);

// Macro accuracy of a trained model on labeled samples: unweighted mean of
// per-class accuracies over the classes present.
double macro_accuracy(const TrainResult& model, const std::vector<LabeledSample>& samples);

struct AblationCell {
  ConstraintKind spec = ConstraintKind::kNone;
  bool not_applicable = false;  // orth needs k >= 2
  bool failed = false;
  std::string error;
  double test_acc = 0.0;
};

struct AblationRow {
  OperatorMode mode = OperatorMode::kOurs;
  std::size_t k = 1;
  std::vector<AblationCell> cells;
  double mean = 0.0;  // over applicable, successful cells
};

struct AblationReport {
  std::vector<ConstraintKind> columns;
  std::vector<AblationRow> rows;

  std::string to_json() const;
};

// One train+eval per (mode, k, spec) cell. Cells that cannot apply are
// marked, a failing cell records its error, and the sweep continues.
AblationReport run_ablation_grid(const TrainConfig& base, const TrainTask& task,
                                 const std::vector<OperatorMode>& modes,
                                 const std::vector<std::size_t>& op_counts,
                                 const std::vector<ConstraintKind>& specs,
                                 std::ostream* progress = nullptr);

// Single-file model artifact: little-endian, shape headers per matrix; see
// README for the exact layout. save overwrites; load validates magic,
// version and shape consistency (DataError on any mismatch).
void save_model(const std::string& path, const TrainResult& model);
TrainResult load_model(const std::string& path);

// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double value);

}  // namespace ctxgcn

#endif  // CTXGCN_TRAINER_HPP
