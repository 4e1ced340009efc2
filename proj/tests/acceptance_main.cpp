// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion is self-contained and uses pinned seeds so the
// verdicts are reproducible run to run.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ctxgcn/baselines.hpp"
#include "ctxgcn/data.hpp"
#include "ctxgcn/gradcheck.hpp"
#include "ctxgcn/oracle.hpp"
#include "ctxgcn/reparam.hpp"
#include "ctxgcn/rng.hpp"
#include "ctxgcn/trainer.hpp"

namespace {

using namespace ctxgcn;

std::string first_lines(const std::string& text, std::size_t count) {
  std::size_t at = 0;
  for (std::size_t line = 0; line < count; ++line) {
    const std::size_t next = text.find('\n', at);
    if (next == std::string::npos) return text;
    at = next + 1;
  }
  return text.substr(0, at);
}

bool columns_sum_to_one(const Matrix& a, double tol, double& worst) {
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) sum += a(i, j);
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst <= tol;
}

// ---------------------------------------------------------------------------
// Criterion 1: gradient correctness over the full (mode, spec, K,
// differential) grid.
bool criterion_gradients(std::string& detail) {
  const std::vector<OperatorMode> modes{OperatorMode::kHpm, OperatorMode::kLpm,
                                        OperatorMode::kOurs};
  const std::vector<ConstraintKind> specs{ConstraintKind::kNone,    ConstraintKind::kSym,
                                          ConstraintKind::kOrth,    ConstraintKind::kStc,
                                          ConstraintKind::kSymOrth, ConstraintKind::kOrthStc};
  std::uint64_t seed = 40;
  std::size_t instances = 0;
  double worst = 0.0;
  std::string worst_name = "no coordinate above the absolute floor";

  for (const OperatorMode mode : modes)
    for (const ConstraintKind spec : specs)
      for (const std::size_t k : {std::size_t{2}, std::size_t{4}})
        for (const bool differential : {false, true}) {
          GradCheckInstance instance;
          instance.mode = mode;
          instance.constraint = spec;
          instance.op_count = k;
          instance.node_count = 5;
          instance.signal_dim = 6;
          instance.channels = 3;
          instance.class_count = 3;
          instance.differential = differential;
          instance.gamma_eff = 5.0;
          instance.seed = seed++;
          const GradCheckReport report = run_gradcheck(instance);
          ++instances;
          if (report.overall() > worst) {
            worst = report.overall();
            worst_name = to_string(mode) + "/" + to_string(spec) + "/k=" + std::to_string(k) +
                         (differential ? "/diff" : "");
          }
        }

  detail = std::to_string(instances) + " instances, worst rel err " + format_double(worst) +
           " at " + worst_name;
  return instances == 72 && worst < 1e-5;
}

// ---------------------------------------------------------------------------
// Criterion 2: the separation proposition holds over the parameter sweep and
// the worked example reproduces the documented temperature.
bool criterion_proposition(std::string& detail) {
  const double example = gamma_lower_bound(2, 0.01, 0.01);
  if (std::abs(example - 528.8241522117262) > 1e-9 || example >= 530.0) {
    detail = "worked example gave " + format_double(example);
    return false;
  }

  std::uint64_t seed = 1000;
  for (const std::size_t k : {std::size_t{2}, std::size_t{4}, std::size_t{8}})
    for (const double delta : {0.01, 0.1})
      for (const double eps : {0.01, 0.05}) {
        const oracle::PropositionReport report =
            oracle::proposition_trials(k, delta, eps, 10000, seed++);
        if (report.violations != 0 || report.worst_overlap > eps) {
          detail = "K=" + std::to_string(k) + " delta=" + format_double(delta) +
                   " eps=" + format_double(eps) + ": " + std::to_string(report.violations) +
                   " violations, worst overlap " + format_double(report.worst_overlap);
          return false;
        }
      }
  detail = "12 settings x 10000 trials, zero violations; worked example gamma " +
           format_double(example);
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 3: constraint invariants hold across a 50-epoch run for each
// constraint choice.
TrainTask invariant_task() {
  SynthesisConfig synth;
  synth.node_count = 6;
  synth.class_count = 2;
  synth.samples_per_class = 10;
  synth.frame_count = 12;
  synth.noise_std = 0.05;
  const SynthesizedTask raw = synthesize_task(synth);
  return make_task(raw.train, raw.test, 4, raw.nominal_skeleton);
}

TrainConfig invariant_config(ConstraintKind kind) {
  TrainConfig config;
  config.epochs = 50;
  config.batch_size = 16;
  config.lr0 = 0.05;
  config.constraint = kind;
  config.mode = OperatorMode::kOurs;
  config.k = 4;
  config.m = 4;
  config.channels = 8;
  config.seed = 11;
  // Tiny assumed separation: the annealed temperature is then high enough
  // that whatever separations training produces keep overlaps under eps.
  if (has_orth(kind)) config.delta = 1e-6;
  return config;
}

bool criterion_training_invariants(std::string& detail) {
  const TrainTask task = invariant_task();
  std::string failures;

  for (const ConstraintKind kind : {ConstraintKind::kStc, ConstraintKind::kSym,
                                    ConstraintKind::kOrth, ConstraintKind::kSymOrth,
                                    ConstraintKind::kOrthStc}) {
    const std::string name = to_string(kind);
    const TrainConfig config = invariant_config(kind);
    const ConstraintSpec spec = config.constraint_spec();

    std::ostringstream full_stream;
    const TrainResult result = train(config, task, &full_stream);
    if (result.history.size() != 50) {
      failures += " " + name + ":history";
      continue;
    }

    if (has_orth(kind)) {
      // Annealing schedule is exactly reproducible from the crispmax
      // settings. Epochs are
      // numbered 1..epochs, so the final epoch runs at the full gamma_base.
      bool schedule_ok = true;
      for (std::size_t e = 0; e < 50; ++e)
        if (result.history[e].gamma_eff != anneal_gamma(spec.crispmax, e + 1)) schedule_ok = false;
      if (!schedule_ok) failures += " " + name + ":schedule";

      const OrthogonalityReport orth = check_epsilon_orthogonality(result.operators, config.epsilon);
      if (!orth.ok) failures += " " + name + ":overlap=" + format_double(orth.max_overlap);
      if (!result.history.back().max_overlap ||
          *result.history.back().max_overlap != orth.max_overlap)
        failures += " " + name + ":overlap-report";

      // The stored operators are the constrained view of the stored free
      // basis at the stored temperature.
      const ConstrainContext ctx = constrain(result.free_basis, spec, result.final_gamma);
      for (std::size_t k = 0; k < ctx.output.mats.size(); ++k)
        if (!(ctx.output.mats[k] == result.operators.mats[k]))
          failures += " " + name + ":recompute";
      if (kind == ConstraintKind::kOrthStc) {
        double worst = 0.0;
        for (const Matrix& pre : ctx.premapped)
          if (!columns_sum_to_one(pre, 1e-9, worst))
            failures += " " + name + ":premap-columns=" + format_double(worst);
      }
    } else {
      // Non-orth specs never read the temperature, so a shorter run replays
      // the long run's prefix byte for byte; its final state is the long
      // run's mid-training state, where the invariant must already hold.
      TrainConfig prefix_config = config;
      prefix_config.epochs = 20;
      std::ostringstream prefix_stream;
      const TrainResult mid = train(prefix_config, task, &prefix_stream);
      if (prefix_stream.str() != first_lines(full_stream.str(), 20))
        failures += " " + name + ":replay";

      for (const TrainResult* checked : {&result, &mid}) {
        for (const Matrix& a : checked->operators.mats) {
          if (kind == ConstraintKind::kStc) {
            double worst = 0.0;
            if (!columns_sum_to_one(a, 1e-9, worst))
              failures += " " + name + ":columns=" + format_double(worst);
          }
          if (kind == ConstraintKind::kSym && !(a.transposed() == a))
            failures += " " + name + ":symmetry";
        }
      }
    }

    if (kind == ConstraintKind::kSymOrth)
      for (const Matrix& a : result.operators.mats)
        if (!(a.transposed() == a)) failures += " " + name + ":symmetry";
  }

  if (!failures.empty()) {
    detail = "violated:" + failures;
    return false;
  }
  detail = "5 specs x 50 epochs, all invariants held";
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 4: baseline fidelity.
bool criterion_baselines(std::string& detail) {
  // Matrix powers match the naive oracle bitwise.
  Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a(6, 6);
    for (double& v : a.data()) v = rng.uniform(-1.0, 1.0);
    const AdjacencyBasis basis = power_map_basis(a, 5);
    for (std::size_t p = 0; p < 5; ++p)
      if (basis.mats[p].data() != oracle::naive_matrix_power(a.data(), 6, p)) {
        detail = "power mismatch at trial " + std::to_string(trial) + " power " +
                 std::to_string(p);
        return false;
      }
  }

  // Kruskal yields spanning forests on 100 random graphs.
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 12;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng.uniform() < 0.2) edges.emplace_back(i, j);
    const SkeletonAdjacency graph = SkeletonAdjacency::make(n, std::move(edges));
    const SkeletonAdjacency forest = kruskal_spanning_tree(graph);
    const std::size_t components = oracle::component_count(n, graph.edges);
    if (!oracle::is_acyclic(n, forest.edges) ||
        forest.edges.size() != n - components ||
        oracle::component_count(n, forest.edges) != components) {
      detail = "spanning forest violated at trial " + std::to_string(trial);
      return false;
    }
  }

  // HPM operators stay bitwise frozen over 100 SGD steps; LPM masks are
  // respected exactly.
  const TrainTask task = invariant_task();
  TrainConfig config;
  config.epochs = 100;
  config.batch_size = 200;  // clipped to the train set: one step per epoch
  config.lr0 = 0.05;
  config.k = 3;
  config.m = 4;
  config.channels = 8;
  config.seed = 13;
  config.mode = OperatorMode::kHpm;
  config.constraint = ConstraintKind::kStc;

  const TrainResult hpm = train(config, task, nullptr);
  const OperatorSet expected = build_operator_set(OperatorMode::kHpm, task.skeleton,
                                                  config.constraint_spec(), config.k, config.seed);
  if (!hpm.fixed_operators) {
    detail = "hpm operators not marked fixed";
    return false;
  }
  for (std::size_t k = 0; k < config.k; ++k)
    if (!(hpm.free_basis.mats[k] == expected.basis.mats[k]) ||
        !(hpm.operators.mats[k] == expected.basis.mats[k])) {
      detail = "hpm operator " + std::to_string(k) + " drifted";
      return false;
    }

  config.mode = OperatorMode::kLpm;
  config.constraint = ConstraintKind::kNone;
  const TrainResult lpm = train(config, task, nullptr);
  bool moved = false;
  for (std::size_t k = 0; k < config.k; ++k) {
    const Matrix& mat = lpm.free_basis.mats[k];
    const Matrix& mask = lpm.free_basis.masks[k];
    for (std::size_t i = 0; i < mat.size(); ++i) {
      if (mask.data()[i] == 0.0 && mat.data()[i] != 0.0) {
        detail = "lpm leaked outside its mask in operator " + std::to_string(k);
        return false;
      }
      if (mask.data()[i] != 0.0) moved = true;
    }
  }
  if (!moved) {
    detail = "lpm has no unmasked parameters";
    return false;
  }

  detail = "powers bitwise, 100 forests spanning, hpm frozen, lpm masks intact over 100 steps";
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 5: temporal chunking properties.
bool criterion_chunking(std::string& detail) {
  Rng rng(81);
  SkeletonSequence seq;
  seq.label = "probe";
  for (int t = 0; t < 5; ++t) {
    std::vector<std::array<double, 3>> frame(3);
    for (auto& joint : frame) joint = {rng.uniform(), rng.uniform(), rng.uniform()};
    seq.frames.push_back(std::move(frame));
  }

  // T = M: the descriptor is the coordinates verbatim.
  const ChunkedDescriptor identity = temporal_chunk(seq, 5);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t c = 0; c < 3; ++c)
        if (identity.u(t * 3 + c, j) != seq.frames[t][j][c]) {
          detail = "T=M identity violated";
          return false;
        }

  // Linear motion, T=16, M=8: chunk means are the exact midpoints.
  SkeletonSequence ramp;
  ramp.label = "ramp";
  for (int t = 0; t < 16; ++t)
    ramp.frames.push_back({{static_cast<double>(t), 0.0, 0.0}});
  const ChunkedDescriptor mids = temporal_chunk(ramp, 8);
  for (std::size_t m = 0; m < 8; ++m)
    if (mids.u(m * 3 + 0, 0) != 2.0 * static_cast<double>(m) + 0.5) {
      detail = "linear-motion midpoints violated at chunk " + std::to_string(m);
      return false;
    }

  // Frame duplication leaves the descriptor unchanged when M divides T.
  SkeletonSequence doubled;
  doubled.label = seq.label;
  for (const auto& frame : seq.frames) {
    doubled.frames.push_back(frame);
    doubled.frames.push_back(frame);
  }
  SkeletonSequence halved = seq;  // 5 frames, M=5 divides both
  const ChunkedDescriptor once = temporal_chunk(halved, 5);
  const ChunkedDescriptor twice = temporal_chunk(doubled, 5);
  for (std::size_t i = 0; i < once.u.size(); ++i)
    if (std::abs(once.u.data()[i] - twice.u.data()[i]) > 1e-12) {
      detail = "duplication invariance violated";
      return false;
    }

  // Time reversal changes the descriptor.
  SkeletonSequence reversed;
  reversed.label = ramp.label;
  reversed.frames.assign(ramp.frames.rbegin(), ramp.frames.rend());
  if (temporal_chunk(reversed, 8).u.data() == mids.u.data()) {
    detail = "reversal insensitive";
    return false;
  }

  detail = "identity, midpoint, duplication and reversal properties all exact";
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 6: the comparative claim on the hidden-graph synthetic task.
bool criterion_synthetic_separation(std::string& detail) {
  SynthesisConfig synth;
  synth.node_count = 10;
  synth.class_count = 2;
  synth.samples_per_class = 40;
  synth.frame_count = 16;
  synth.noise_std = 0.2;
  const SynthesizedTask raw = synthesize_task(synth);
  const TrainTask task = make_task(raw.train, raw.test, 8, raw.nominal_skeleton);

  TrainConfig config;
  config.epochs = 200;
  config.batch_size = 16;
  config.lr0 = 0.05;
  config.constraint = ConstraintKind::kOrthStc;
  config.k = 4;
  config.m = 8;
  config.channels = 16;
  config.seed = 5;

  TrainConfig ours_config = config;
  ours_config.mode = OperatorMode::kOurs;
  const TrainResult ours = train(ours_config, task, nullptr);
  const double ours_acc = macro_accuracy(ours, task.test);

  TrainConfig hpm_config = config;
  hpm_config.mode = OperatorMode::kHpm;
  const TrainResult hpm = train(hpm_config, task, nullptr);
  const double hpm_acc = macro_accuracy(hpm, task.test);

  detail = "ours " + format_double(ours_acc) + " vs hpm " + format_double(hpm_acc);
  return ours_acc >= 0.95 && ours_acc >= hpm_acc + 0.05;
}

// ---------------------------------------------------------------------------
// Criterion 7: the ablation runner handles 15-joint data end to end. The
// absolute numbers of the original tables are out of scope by design; this
// checks the mechanical pipeline and the report shape only.
bool criterion_ablation_pipeline(std::string& detail) {
  const std::string path = "acceptance_tmp_sbu.jsonl";
  const std::size_t joints = 15;

  Rng rng(91);
  std::vector<SkeletonSequence> corpus;
  std::vector<std::array<double, 3>> base(joints);
  for (auto& b : base) b = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  for (int sample = 0; sample < 20; ++sample) {
    SkeletonSequence seq;
    const bool approach = sample % 2 == 0;
    seq.label = approach ? "approach" : "depart";
    for (int t = 0; t < 8; ++t) {
      const double scale = 1.0 + (approach ? -0.05 : 0.05) * static_cast<double>(t);
      std::vector<std::array<double, 3>> frame(joints);
      for (std::size_t j = 0; j < joints; ++j)
        for (std::size_t c = 0; c < 3; ++c)
          frame[j][c] = base[j][c] * scale + 0.02 * rng.normal();
      seq.frames.push_back(std::move(frame));
    }
    corpus.push_back(std::move(seq));
  }
  save_sequences(path, corpus);
  const std::vector<SkeletonSequence> loaded = load_sequences(path);
  std::remove(path.c_str());
  if (loaded.size() != corpus.size() || loaded.front().joint_count() != joints) {
    detail = "round trip lost data";
    return false;
  }

  const IndexSplit split = split_by_fraction(loaded.size(), 0.7, 17);
  std::vector<SkeletonSequence> train_seqs, test_seqs;
  for (std::size_t i : split.train) train_seqs.push_back(loaded[i]);
  for (std::size_t i : split.test) test_seqs.push_back(loaded[i]);

  const SkeletonAdjacency skeleton = SkeletonAdjacency::make(
      joints, {{0, 1}, {1, 2}, {2, 3}, {1, 4}, {4, 5}, {5, 6}, {1, 7}, {7, 8}, {8, 9},
               {3, 10}, {10, 11}, {11, 12}, {3, 13}, {13, 14}});
  const TrainTask task = make_task(train_seqs, test_seqs, 4, skeleton);

  TrainConfig base_config;
  base_config.epochs = 2;
  base_config.batch_size = 16;
  base_config.lr0 = 0.05;
  base_config.m = 4;
  base_config.channels = 4;
  base_config.seed = 3;

  std::ostringstream progress;
  const AblationReport report = run_ablation_grid(
      base_config, task, {OperatorMode::kHpm, OperatorMode::kOurs}, {2},
      {ConstraintKind::kNone, ConstraintKind::kStc}, &progress);

  if (report.rows.size() != 2 || report.columns.size() != 2) {
    detail = "report shape wrong";
    return false;
  }
  for (const AblationRow& row : report.rows) {
    if (row.cells.size() != 2) {
      detail = "row shape wrong";
      return false;
    }
    for (const AblationCell& cell : row.cells) {
      if (cell.not_applicable) {
        detail = "unexpected n/a cell";
        return false;
      }
      if (cell.failed) {
        detail = "cell failed: " + cell.error;
        return false;
      }
      if (!(cell.test_acc >= 0.0 && cell.test_acc <= 1.0)) {
        detail = "accuracy out of range";
        return false;
      }
    }
  }
  const std::string json = report.to_json();
  if (json.find("\"format\":1") == std::string::npos ||
      json.find("\"rows\":") == std::string::npos ||
      json.find("\"mode\":\"hpm\"") == std::string::npos) {
    detail = "report json malformed";
    return false;
  }
  if (progress.str().find("mode=hpm k=2") == std::string::npos) {
    detail = "progress log missing";
    return false;
  }

  detail = "15-joint corpus through load, split, grid and report";
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 8: byte-identical metrics under identical config and seed.
bool criterion_determinism(std::string& detail) {
  const TrainTask task = invariant_task();
  TrainConfig config = invariant_config(ConstraintKind::kOrthStc);
  config.epochs = 8;
  config.k = 2;

  std::ostringstream first, second, third;
  train(config, task, &first);
  train(config, task, &second);
  if (first.str() != second.str()) {
    detail = "identical runs diverged";
    return false;
  }
  TrainConfig reseeded = config;
  reseeded.seed = config.seed + 1;
  train(reseeded, task, &third);
  if (third.str() == first.str()) {
    detail = "different seeds produced identical streams";
    return false;
  }
  detail = "8-epoch orth+stc streams byte-identical; reseeded stream differs";
  return true;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* text;
    bool (*run)(std::string&);
  };
  const std::vector<Criterion> criteria{
      {1, "analytic gradients match central finite differences on the full grid",
       criterion_gradients},
      {2, "separation proposition holds over 12 parameter settings", criterion_proposition},
      {3, "constraint invariants hold across 50-epoch training runs",
       criterion_training_invariants},
      {4, "baseline operators are exact, frozen and mask-respecting", criterion_baselines},
      {5, "temporal chunking matches its specified properties", criterion_chunking},
      {6, "learned operators beat handcrafted ones on the hidden-graph task",
       criterion_synthetic_separation},
      {7, "ablation pipeline handles 15-joint data end to end", criterion_ablation_pipeline},
      {8, "training metrics are byte-deterministic under a fixed seed", criterion_determinism},
  };

  int failures = 0;
  for (const Criterion& criterion : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = criterion.run(detail);
    } catch (const std::exception& error) {
      ok = false;
      detail = std::string("exception: ") + error.what();
    }
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << criterion.id << ": "
              << criterion.text << " (" << detail << ")" << std::endl;
    if (!ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
