#include "ctxgcn/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ctxgcn/reparam.hpp"
#include "ctxgcn/rng.hpp"

namespace ctxgcn {

ConstraintSpec TrainConfig::constraint_spec() const {
  ConstraintSpec spec;
  spec.kind = constraint;
  spec.crispmax.epsilon = epsilon;
  spec.crispmax.delta = delta;
  spec.crispmax.anneal = anneal;
  spec.crispmax.max_epochs = std::max<std::size_t>(epochs, 1);
  if (spec.orth())
    spec.crispmax.gamma_base =
        gamma_base > 0.0 ? gamma_base : gamma_lower_bound(k, delta, epsilon);
  else
    spec.crispmax.gamma_base = gamma_base;
  spec.validate(k);
  return spec;
}

std::string format_double(double value) {
  char buffer[64];
  const auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  return std::string(buffer, end);
}

std::string EpochMetrics::to_json_line() const {
  std::string line = "{\"epoch\":" + std::to_string(epoch);
  line += ",\"loss\":" + format_double(loss);
  line += ",\"train_acc\":" + format_double(train_acc);
  line += ",\"test_acc\":" + format_double(test_acc);
  line += ",\"lr\":" + format_double(lr);
  line += ",\"gamma_eff\":" + format_double(gamma_eff);
  if (max_overlap) line += ",\"max_overlap\":" + format_double(*max_overlap);
  line += "}";
  return line;
}

TrainTask make_task(const std::vector<SkeletonSequence>& train_sequences,
                    const std::vector<SkeletonSequence>& test_sequences,
                    std::size_t chunk_count, const SkeletonAdjacency& skeleton) {
  std::vector<SkeletonSequence> all = train_sequences;
  all.insert(all.end(), test_sequences.begin(), test_sequences.end());
  TrainTask task;
  task.classes = class_names(all);
  task.skeleton = skeleton;
  auto convert = [&](const std::vector<SkeletonSequence>& sequences) {
    std::vector<LabeledSample> samples;
    samples.reserve(sequences.size());
    for (const auto& seq : sequences) {
      if (seq.joint_count() != skeleton.joint_count)
        throw DataError("sequence labeled '" + seq.label + "' has " +
                        std::to_string(seq.joint_count()) + " joints, skeleton has " +
                        std::to_string(skeleton.joint_count));
      samples.push_back(
          {temporal_chunk(seq, chunk_count).u, class_index(task.classes, seq.label)});
    }
    return samples;
  };
  task.train = convert(train_sequences);
  task.test = convert(test_sequences);
  return task;
}

double adapt_lr(double prev_lr, const std::vector<double>& loss_history, double lr_factor) {
  if (!(lr_factor > 0.0 && lr_factor < 1.0))
    throw ConstraintError("adapt_lr: lr_factor must lie in (0, 1), got " +
                          std::to_string(lr_factor));
  if (loss_history.size() < 3) return prev_lr;
  const std::size_t t = loss_history.size() - 1;
  const double speed_now = loss_history[t - 1] - loss_history[t];
  const double speed_before = loss_history[t - 2] - loss_history[t - 1];
  const double lr = speed_now > speed_before ? prev_lr * lr_factor : prev_lr / lr_factor;
  return std::clamp(lr, 1e-8, 1.0);
}

void sgd_step(Matrix& params, Matrix& velocity, const Matrix& grad, double lr,
              double momentum) {
  if (!params.same_shape(grad) || !params.same_shape(velocity))
    throw DimensionError("sgd_step: params " + params.shape_str() + ", velocity " +
                         velocity.shape_str() + ", grad " + grad.shape_str());
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity.data()[i] = momentum * velocity.data()[i] + grad.data()[i];
    params.data()[i] -= lr * velocity.data()[i];
  }
}

void sgd_step(std::vector<double>& params, std::vector<double>& velocity,
              const std::vector<double>& grad, double lr, double momentum) {
  if (params.size() != grad.size() || params.size() != velocity.size())
    throw DimensionError("sgd_step: vector lengths differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i];
    params[i] -= lr * velocity[i];
  }
}

namespace {

std::size_t argmax(const std::vector<double>& values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

double evaluate_macro(const AdjacencyBasis& ops, const ConvFilterBank& filters,
                      const std::vector<bool>& differential,
                      const std::vector<LabeledSample>& samples, std::size_t class_count) {
  if (samples.empty()) return 0.0;
  std::vector<std::size_t> correct(class_count, 0), total(class_count, 0);
  for (const auto& sample : samples) {
    const GcnOutput out =
        gcn_forward(ops, NodeSignal{sample.u}, filters, Activation::kRelu, differential);
    ++total[sample.label];
    if (argmax(out.logits) == sample.label) ++correct[sample.label];
  }
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < class_count; ++c) {
    if (total[c] == 0) continue;
    sum += static_cast<double>(correct[c]) / static_cast<double>(total[c]);
    ++present;
  }
  return present == 0 ? 0.0 : sum / static_cast<double>(present);
}

struct ParamState {
  FreeBasis basis;
  bool fixed = false;
  ConvFilterBank filters;
  MatrixList vel_a;
  MatrixList vel_w;
  Matrix vel_head;
  std::vector<double> vel_bias;
};

void add_parameter_noise(FreeBasis& basis, double noise_std, Rng& rng) {
  if (noise_std <= 0.0) return;
  for (std::size_t k = 0; k < basis.op_count(); ++k)
    for (std::size_t i = 0; i < basis.mats[k].size(); ++i) {
      if (basis.has_mask() && basis.masks[k].data()[i] == 0.0) continue;
      basis.mats[k].data()[i] += noise_std * rng.normal();
    }
}

AdjacencyBasis constrained_view(const ParamState& state, const ConstraintSpec& spec,
                                double gamma_eff) {
  if (state.fixed) {
    AdjacencyBasis basis;
    basis.mats = state.basis.mats;
    basis.constraint_tag = spec.kind;
    return basis;
  }
  return constrain(state.basis, spec, gamma_eff).output;
}

}  // namespace

TrainResult train(const TrainConfig& config, const TrainTask& task, std::ostream* metrics_out) {
  if (task.train.empty()) throw DataError("train: empty training set");
  if (task.classes.size() < 2)
    throw DataError("train: needs at least 2 classes, got " +
                    std::to_string(task.classes.size()));
  if (config.k == 0) throw ConstraintError("train: needs at least one operator");
  if (config.batch_size == 0) throw ConstraintError("train: batch_size must be >= 1");
  if (!(config.momentum >= 0.0 && config.momentum < 1.0))
    throw ConstraintError("train: momentum must lie in [0, 1), got " +
                          std::to_string(config.momentum));
  const std::size_t s = 3 * config.m;
  const std::size_t n = task.skeleton.joint_count;
  for (const auto& sample : task.train) {
    if (sample.u.rows() != s || sample.u.cols() != n)
      throw DimensionError("train: sample descriptor is " + sample.u.shape_str() +
                           ", expected " + std::to_string(s) + "x" + std::to_string(n));
    if (sample.label >= task.classes.size())
      throw DataError("train: label index " + std::to_string(sample.label) +
                      " outside the class set");
  }

  const ConstraintSpec spec = config.constraint_spec();
  const std::vector<bool> differential =
      config.differential ? std::vector<bool>(config.k, true) : std::vector<bool>{};

  ParamState state;
  {
    OperatorSet set =
        build_operator_set(config.mode, task.skeleton, spec, config.k, config.seed);
    state.basis = std::move(set.basis);
    state.fixed = set.fixed;
  }

  // Filter and head initialization, then all per-step randomness, comes from
  // one stream; nothing else may consume it or determinism breaks.
  Rng rng(config.seed ^ 0x5DEECE66DULL);
  const std::size_t channels = config.channels;
  const std::size_t classes = task.classes.size();
  state.filters.w.assign(config.k, Matrix(s, channels));
  for (auto& w : state.filters.w)
    for (double& v : w.data()) v = rng.normal() / std::sqrt(static_cast<double>(s));
  state.filters.head = Matrix(channels, classes);
  for (double& v : state.filters.head.data())
    v = rng.normal() / std::sqrt(static_cast<double>(channels));
  state.filters.head_bias.assign(classes, 0.0);

  if (!state.fixed && config.noise_policy == NoisePolicy::kInitOnly)
    add_parameter_noise(state.basis, config.noise_std, rng);

  state.vel_a.assign(config.k, Matrix(n, n));
  state.vel_w.assign(config.k, Matrix(s, channels));
  state.vel_head = Matrix(channels, classes);
  state.vel_bias.assign(classes, 0.0);

  TrainResult result;
  result.classes = task.classes;
  result.fixed_operators = state.fixed;
  result.config = config;

  const bool orth = spec.orth();
  double lr = config.lr0;
  std::vector<double> loss_history;
  const std::size_t epochs = config.dry_run ? 0 : config.epochs;

  auto emit = [&](const EpochMetrics& metrics) {
    result.history.push_back(metrics);
    if (metrics_out) {
      (*metrics_out) << metrics.to_json_line() << '\n';
      metrics_out->flush();
    }
  };

  auto snapshot_metrics = [&](std::size_t epoch, double loss, double gamma_eff,
                              const AdjacencyBasis& ops) {
    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.loss = loss;
    metrics.gamma_eff = gamma_eff;
    metrics.lr = lr;
    metrics.train_acc =
        evaluate_macro(ops, state.filters, differential, task.train, classes);
    metrics.test_acc = evaluate_macro(ops, state.filters, differential, task.test, classes);
    if (orth) metrics.max_overlap = check_epsilon_orthogonality(ops, spec.crispmax.epsilon).max_overlap;
    return metrics;
  };

  if (epochs == 0) {
    // Dry run: report the initial state, change nothing.
    const double gamma_eff = orth ? anneal_gamma(spec.crispmax, 0) : 0.0;
    const AdjacencyBasis ops = constrained_view(state, spec, gamma_eff);
    double loss = 0.0;
    for (const auto& sample : task.train) {
      const GcnOutput out =
          gcn_forward(ops, NodeSignal{sample.u}, state.filters, Activation::kRelu, differential);
      loss += cross_entropy(out.logits, sample.label);
    }
    loss /= static_cast<double>(task.train.size());
    emit(snapshot_metrics(0, loss, gamma_eff, ops));
    result.operators = ops;
    result.free_basis = state.basis;
    result.filters = state.filters;
    result.final_gamma = gamma_eff;
    return result;
  }

  std::vector<std::size_t> order(task.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch_size = std::min<std::size_t>(config.batch_size, task.train.size());
  AdjacencyBasis eval_ops;
  double final_gamma = 0.0;

  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    const double gamma_eff = orth ? anneal_gamma(spec.crispmax, epoch) : 0.0;
    rng.shuffle(order);
    double loss_sum = 0.0;

    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      const double batch_n = static_cast<double>(stop - start);

      if (!state.fixed && config.noise_policy == NoisePolicy::kPerStep)
        add_parameter_noise(state.basis, config.noise_std, rng);

      ConstrainContext ctx;
      AdjacencyBasis ops;
      if (state.fixed) {
        ops = constrained_view(state, spec, gamma_eff);
      } else {
        ctx = constrain(state.basis, spec, gamma_eff);
        ops = ctx.output;
      }

      GcnGradients batch_grad;
      batch_grad.a.assign(config.k, Matrix(n, n));
      batch_grad.w.assign(config.k, Matrix(s, channels));
      batch_grad.head = Matrix(channels, classes);
      batch_grad.head_bias.assign(classes, 0.0);
      batch_grad.u = Matrix(s, n);

      for (std::size_t b = start; b < stop; ++b) {
        const LabeledSample& sample = task.train[order[b]];
        GcnOutput out = gcn_forward(ops, NodeSignal{sample.u}, state.filters,
                                    Activation::kRelu, differential);
        loss_sum += cross_entropy(out.logits, sample.label);
        const GcnGradients g =
            gcn_backward(out, cross_entropy_logit_grad(out.logits, sample.label));
        batch_grad.add_in_place(g);
      }
      batch_grad.scale(1.0 / batch_n);

      if (!state.fixed) {
        const MatrixList grad_free = constrain_vjp(ctx, spec, batch_grad.a);
        for (std::size_t k = 0; k < config.k; ++k)
          sgd_step(state.basis.mats[k], state.vel_a[k], grad_free[k], lr, config.momentum);
      }
      for (std::size_t k = 0; k < config.k; ++k)
        sgd_step(state.filters.w[k], state.vel_w[k], batch_grad.w[k], lr, config.momentum);
      sgd_step(state.filters.head, state.vel_head, batch_grad.head, lr, config.momentum);
      sgd_step(state.filters.head_bias, state.vel_bias, batch_grad.head_bias, lr,
               config.momentum);
    }

    const double epoch_loss = loss_sum / static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss))
      throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                         ": loss is not finite");

    eval_ops = constrained_view(state, spec, gamma_eff);
    final_gamma = gamma_eff;
    emit(snapshot_metrics(epoch, epoch_loss, gamma_eff, eval_ops));

    loss_history.push_back(epoch_loss);
    lr = adapt_lr(lr, loss_history, config.lr_factor);
  }

  result.operators = eval_ops;
  result.free_basis = state.basis;
  result.filters = state.filters;
  result.final_gamma = final_gamma;
  return result;
}

double macro_accuracy(const TrainResult& model, const std::vector<LabeledSample>& samples) {
  const std::vector<bool> differential =
      model.config.differential ? std::vector<bool>(model.config.k, true)
                                : std::vector<bool>{};
  return evaluate_macro(model.operators, model.filters, differential, samples,
                        model.classes.size());
}

AblationReport run_ablation_grid(const TrainConfig& base, const TrainTask& task,
                                 const std::vector<OperatorMode>& modes,
                                 const std::vector<std::size_t>& op_counts,
                                 const std::vector<ConstraintKind>& specs,
                                 std::ostream* progress) {
  AblationReport report;
  report.columns = specs;
  for (const OperatorMode mode : modes) {
    for (const std::size_t k : op_counts) {
      AblationRow row;
      row.mode = mode;
      row.k = k;
      double sum = 0.0;
      std::size_t counted = 0;
      for (const ConstraintKind kind : specs) {
        AblationCell cell;
        cell.spec = kind;
        if (has_orth(kind) && k < 2) {
          cell.not_applicable = true;
        } else {
          TrainConfig config = base;
          config.mode = mode;
          config.k = k;
          config.constraint = kind;
          config.gamma_base = 0.0;  // re-derive per cell
          try {
            const TrainResult model = train(config, task, nullptr);
            cell.test_acc = macro_accuracy(model, task.test);
            sum += cell.test_acc;
            ++counted;
          } catch (const std::exception& error) {
            cell.failed = true;
            cell.error = error.what();
          }
        }
        if (progress) {
          (*progress) << "mode=" << to_string(mode) << " k=" << k
                      << " spec=" << to_string(kind) << " ";
          if (cell.not_applicable)
            (*progress) << "n/a";
          else if (cell.failed)
            (*progress) << "failed: " << cell.error;
          else
            (*progress) << "test_acc=" << format_double(cell.test_acc);
          (*progress) << '\n';
          progress->flush();
        }
        row.cells.push_back(std::move(cell));
      }
      row.mean = counted == 0 ? 0.0 : sum / static_cast<double>(counted);
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

namespace {

std::string json_escape(const std::string& text) {
  std::string out;
  for (const char c : text) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

}  // namespace

std::string AblationReport::to_json() const {
  std::string out = "{\"format\":1,\"columns\":[";
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out += ",";
    out += "\"" + to_string(columns[i]) + "\"";
  }
  out += "],\"rows\":[";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const AblationRow& row = rows[r];
    if (r) out += ",";
    out += "{\"mode\":\"" + to_string(row.mode) + "\",\"k\":" + std::to_string(row.k) +
           ",\"cells\":[";
    for (std::size_t c = 0; c < row.cells.size(); ++c) {
      const AblationCell& cell = row.cells[c];
      if (c) out += ",";
      if (cell.not_applicable)
        out += "{\"na\":true}";
      else if (cell.failed)
        out += "{\"error\":\"" + json_escape(cell.error) + "\"}";
      else
        out += "{\"acc\":" + format_double(cell.test_acc) + "}";
    }
    out += "],\"mean\":" + format_double(row.mean) + "}";
  }
  out += "]}";
  return out;
}

// ---------------------------------------------------------------------------
// Model artifact: single little-endian file.
//   magic "CTXG" | u32 version=1
//   u64 length + flat key=value config text
//   u64 class count, then u32 length + bytes per class name
//   u64 matrix count, then per matrix:
//     u32 name length | name | u64 rows | u64 cols | rows*cols doubles (LE)

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double value) {
  std::uint64_t bits;
  std::memcpy(&bits, &value, sizeof bits);
  put_u64(out, bits);
}

void put_matrix(std::string& out, const std::string& name, const Matrix& m) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u64(out, m.rows());
  put_u64(out, m.cols());
  for (const double v : m.data()) put_f64(out, v);
}

class ArtifactReader {
 public:
  explicit ArtifactReader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::string take(std::size_t count, const char* what) {
    if (pos_ + count > bytes_.size())
      throw DataError(std::string("model artifact truncated while reading ") + what);
    std::string out = bytes_.substr(pos_, count);
    pos_ += count;
    return out;
  }

  std::uint32_t u32(const char* what) {
    const std::string raw = take(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(raw[i]);
    return v;
  }

  std::uint64_t u64(const char* what) {
    const std::string raw = take(8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(raw[i]);
    return v;
  }

  double f64(const char* what) {
    const std::uint64_t bits = u64(what);
    double value;
    std::memcpy(&value, &bits, sizeof value);
    return value;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

std::map<std::string, std::string> parse_flat_config(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("model artifact config line without '=': " + line);
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

const std::string& config_field(const std::map<std::string, std::string>& config,
                                const std::string& key) {
  const auto it = config.find(key);
  if (it == config.end()) throw DataError("model artifact config misses key '" + key + "'");
  return it->second;
}

double config_double(const std::map<std::string, std::string>& config, const std::string& key) {
  const std::string& text = config_field(config, key);
  try {
    return std::stod(text);
  } catch (const std::exception&) {
    throw DataError("model artifact config key '" + key + "' has non-numeric value '" + text +
                    "'");
  }
}

std::uint64_t config_u64(const std::map<std::string, std::string>& config,
                         const std::string& key) {
  const std::string& text = config_field(config, key);
  try {
    return std::stoull(text);
  } catch (const std::exception&) {
    throw DataError("model artifact config key '" + key + "' has non-integer value '" + text +
                    "'");
  }
}

}  // namespace

void save_model(const std::string& path, const TrainResult& model) {
  std::string out;
  out += "CTXG";
  put_u32(out, 1);

  const TrainConfig& c = model.config;
  std::string config_text;
  auto kv = [&config_text](const std::string& key, const std::string& value) {
    config_text += key + "=" + value + "\n";
  };
  kv("epochs", std::to_string(c.epochs));
  kv("batch_size", std::to_string(c.batch_size));
  kv("momentum", format_double(c.momentum));
  kv("lr0", format_double(c.lr0));
  kv("lr_factor", format_double(c.lr_factor));
  kv("constraint", to_string(c.constraint));
  kv("mode", to_string(c.mode));
  kv("k", std::to_string(c.k));
  kv("gamma_base", format_double(c.gamma_base));
  kv("epsilon", format_double(c.epsilon));
  kv("delta", format_double(c.delta));
  kv("noise_std", format_double(c.noise_std));
  kv("noise_policy", to_string(c.noise_policy));
  kv("m", std::to_string(c.m));
  kv("seed", std::to_string(c.seed));
  kv("channels", std::to_string(c.channels));
  kv("differential", c.differential ? "1" : "0");
  kv("anneal", c.anneal ? "1" : "0");
  kv("final_gamma", format_double(model.final_gamma));
  kv("fixed_operators", model.fixed_operators ? "1" : "0");
  kv("masked", model.free_basis.has_mask() ? "1" : "0");
  put_u64(out, config_text.size());
  out += config_text;

  put_u64(out, model.classes.size());
  for (const std::string& name : model.classes) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
  }

  const std::size_t k = model.config.k;
  std::uint64_t matrix_count = 2 * k + 2 + (model.free_basis.has_mask() ? k : 0) + k;
  put_u64(out, matrix_count);
  for (std::size_t i = 0; i < k; ++i)
    put_matrix(out, "free_" + std::to_string(i), model.free_basis.mats[i]);
  if (model.free_basis.has_mask())
    for (std::size_t i = 0; i < k; ++i)
      put_matrix(out, "mask_" + std::to_string(i), model.free_basis.masks[i]);
  for (std::size_t i = 0; i < k; ++i)
    put_matrix(out, "op_" + std::to_string(i), model.operators.mats[i]);
  for (std::size_t i = 0; i < k; ++i)
    put_matrix(out, "w_" + std::to_string(i), model.filters.w[i]);
  put_matrix(out, "head", model.filters.head);
  Matrix bias(1, model.filters.head_bias.size());
  for (std::size_t i = 0; i < model.filters.head_bias.size(); ++i)
    bias(0, i) = model.filters.head_bias[i];
  put_matrix(out, "bias", bias);

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw DataError("cannot open '" + path + "' for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw DataError("failed writing model artifact to '" + path + "'");
}

TrainResult load_model(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open model artifact '" + path + "'");
  std::ostringstream buffer;
  buffer << file.rdbuf();
  ArtifactReader reader(buffer.str());

  if (reader.take(4, "magic") != "CTXG")
    throw DataError("'" + path + "' is not a model artifact (bad magic)");
  const std::uint32_t version = reader.u32("version");
  if (version != 1)
    throw DataError("model artifact version " + std::to_string(version) + " is unsupported");

  const std::uint64_t config_len = reader.u64("config length");
  const auto config = parse_flat_config(reader.take(config_len, "config"));

  TrainResult model;
  TrainConfig& c = model.config;
  c.epochs = config_u64(config, "epochs");
  c.batch_size = config_u64(config, "batch_size");
  c.momentum = config_double(config, "momentum");
  c.lr0 = config_double(config, "lr0");
  c.lr_factor = config_double(config, "lr_factor");
  c.constraint = parse_constraint_kind(config_field(config, "constraint"));
  c.mode = parse_operator_mode(config_field(config, "mode"));
  c.k = config_u64(config, "k");
  c.gamma_base = config_double(config, "gamma_base");
  c.epsilon = config_double(config, "epsilon");
  c.delta = config_double(config, "delta");
  c.noise_std = config_double(config, "noise_std");
  c.noise_policy = parse_noise_policy(config_field(config, "noise_policy"));
  c.m = config_u64(config, "m");
  c.seed = config_u64(config, "seed");
  c.channels = config_u64(config, "channels");
  c.differential = config_field(config, "differential") == "1";
  c.anneal = config_field(config, "anneal") == "1";
  model.final_gamma = config_double(config, "final_gamma");
  model.fixed_operators = config_field(config, "fixed_operators") == "1";
  const bool masked = config_field(config, "masked") == "1";

  const std::uint64_t class_count = reader.u64("class count");
  for (std::uint64_t i = 0; i < class_count; ++i) {
    const std::uint32_t len = reader.u32("class name length");
    model.classes.push_back(reader.take(len, "class name"));
  }

  const std::uint64_t matrix_count = reader.u64("matrix count");
  std::map<std::string, Matrix> matrices;
  for (std::uint64_t i = 0; i < matrix_count; ++i) {
    const std::uint32_t name_len = reader.u32("matrix name length");
    const std::string name = reader.take(name_len, "matrix name");
    const std::uint64_t rows = reader.u64("matrix rows");
    const std::uint64_t cols = reader.u64("matrix cols");
    Matrix m(rows, cols);
    for (double& v : m.data()) v = reader.f64("matrix entry");
    matrices.emplace(name, std::move(m));
  }
  if (!reader.done()) throw DataError("model artifact has trailing bytes");

  auto fetch = [&matrices, &path](const std::string& name) -> Matrix {
    const auto it = matrices.find(name);
    if (it == matrices.end())
      throw DataError("model artifact '" + path + "' misses matrix '" + name + "'");
    return it->second;
  };

  for (std::size_t i = 0; i < c.k; ++i) {
    model.free_basis.mats.push_back(fetch("free_" + std::to_string(i)));
    model.operators.mats.push_back(fetch("op_" + std::to_string(i)));
    model.filters.w.push_back(fetch("w_" + std::to_string(i)));
  }
  if (masked)
    for (std::size_t i = 0; i < c.k; ++i)
      model.free_basis.masks.push_back(fetch("mask_" + std::to_string(i)));
  model.operators.constraint_tag = c.constraint;
  model.filters.head = fetch("head");
  const Matrix bias = fetch("bias");
  if (bias.rows() != 1)
    throw DataError("model artifact bias must be a row vector, got " + bias.shape_str());
  model.filters.head_bias.assign(bias.data().begin(), bias.data().end());

  model.free_basis.validate();
  const std::size_t n = model.free_basis.node_count();
  for (const Matrix& op : model.operators.mats)
    if (op.rows() != n || op.cols() != n)
      throw DataError("model artifact operator shape " + op.shape_str() +
                      " disagrees with basis " + std::to_string(n) + "x" + std::to_string(n));
  if (model.filters.head.rows() != model.filters.channels())
    throw DataError("model artifact head shape disagrees with filters");
  if (model.filters.head_bias.size() != model.filters.class_count())
    throw DataError("model artifact bias length disagrees with head");
  if (model.classes.size() != model.filters.class_count())
    throw DataError("model artifact lists " + std::to_string(model.classes.size()) +
                    " classes but the head has " +
                    std::to_string(model.filters.class_count()) + " outputs");
  return model;
}

}  // namespace ctxgcn
