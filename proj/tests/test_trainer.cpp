// Training loop mechanics: learning-rate adaptation, momentum SGD, metric
// serialization, determinism, artifact IO, and the ablation grid.

#include "ctxgcn/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "ctxgcn/reparam.hpp"
#include "doctest.h"

using namespace ctxgcn;

namespace {

// Small but nontrivial synthetic task shared by the end-to-end cases.
TrainTask tiny_task() {
  SynthesisConfig config;
  config.node_count = 4;
  config.class_count = 2;
  config.samples_per_class = 4;
  config.frame_count = 6;
  config.noise_std = 0.05;
  const SynthesizedTask raw = synthesize_task(config);
  return make_task(raw.train, raw.test, 2, raw.nominal_skeleton);
}

TrainConfig tiny_config() {
  TrainConfig config;
  config.epochs = 3;
  config.batch_size = 4;
  config.lr0 = 0.05;
  config.k = 2;
  config.channels = 4;
  config.m = 2;
  config.seed = 7;
  return config;
}

struct TempPath {
  std::string path;
  explicit TempPath(const std::string& name) : path("test_tmp_" + name) {}
  ~TempPath() { std::remove(path.c_str()); }
};

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("constraint_spec resolves the temperature bound and the epoch ceiling") {
  TrainConfig config = tiny_config();
  config.constraint = ConstraintKind::kOrth;
  config.k = 4;
  config.epochs = 50;
  const ConstraintSpec spec = config.constraint_spec();
  CHECK(spec.crispmax.gamma_base == gamma_lower_bound(4, config.delta, config.epsilon));
  CHECK(spec.crispmax.max_epochs == 50);

  config.gamma_base = 12.0;
  CHECK(config.constraint_spec().crispmax.gamma_base == 12.0);

  config.k = 1;
  CHECK_THROWS_AS(config.constraint_spec(), ConstraintError);

  TrainConfig zero_epochs = tiny_config();
  zero_epochs.epochs = 0;
  CHECK(zero_epochs.constraint_spec().crispmax.max_epochs == 1);
}

TEST_CASE("epoch metrics serialize to a fixed JSON line") {
  EpochMetrics m;
  m.epoch = 3;
  m.loss = 0.5;
  m.train_acc = 1.0;
  m.test_acc = 0.25;
  m.lr = 0.0625;
  m.gamma_eff = 0.0;
  CHECK(m.to_json_line() ==
        "{\"epoch\":3,\"loss\":0.5,\"train_acc\":1,\"test_acc\":0.25,\"lr\":0.0625,"
        "\"gamma_eff\":0}");
  m.max_overlap = 0.125;
  CHECK(m.to_json_line() ==
        "{\"epoch\":3,\"loss\":0.5,\"train_acc\":1,\"test_acc\":0.25,\"lr\":0.0625,"
        "\"gamma_eff\":0,\"max_overlap\":0.125}");
}

TEST_CASE("format_double emits the shortest form that round-trips exactly") {
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(1.0) == "1");
  for (const double value : {0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -0.0}) {
    const std::string text = format_double(value);
    const double parsed = std::strtod(text.c_str(), nullptr);
    CHECK(parsed == value);
    CHECK(std::signbit(parsed) == std::signbit(value));
  }
}

TEST_CASE("make_task indexes labels over the union of both sides") {
  SkeletonSequence b;
  b.label = "b";
  b.frames.assign(4, std::vector<std::array<double, 3>>(3, {1.0, 2.0, 3.0}));
  SkeletonSequence a = b;
  a.label = "a";
  SkeletonSequence c = b;
  c.label = "c";

  const TrainTask task = make_task({b, a}, {c}, 2, SkeletonAdjacency::chain(3));
  CHECK(task.classes == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(task.train.size() == 2);
  CHECK(task.train[0].label == 1);  // "b"
  CHECK(task.train[1].label == 0);  // "a"
  CHECK(task.test[0].label == 2);   // "c"
  CHECK(task.train[0].u.rows() == 6);  // 3 coords * 2 chunks
  CHECK(task.train[0].u.cols() == 3);

  SkeletonSequence short_handed = b;
  short_handed.frames.assign(4, std::vector<std::array<double, 3>>(2, {0.0, 0.0, 0.0}));
  CHECK_THROWS_WITH_AS(make_task({short_handed}, {}, 2, SkeletonAdjacency::chain(3)),
                       doctest::Contains("joints"), DataError);
}

TEST_CASE("adapt_lr passes through until three losses exist") {
  CHECK(adapt_lr(0.1, {}, 0.99) == 0.1);
  CHECK(adapt_lr(0.1, {1.0}, 0.99) == 0.1);
  CHECK(adapt_lr(0.1, {1.0, 0.9}, 0.99) == 0.1);
}

TEST_CASE("adapt_lr shrinks on accelerating loss and grows otherwise") {
  // Speeds: 0.1 then 0.2 (accelerating) -> shrink.
  CHECK(adapt_lr(0.1, {1.0, 0.9, 0.7}, 0.99) == 0.1 * 0.99);
  // Speeds: 0.3 then 0.1 (decelerating) -> grow.
  CHECK(adapt_lr(0.1, {1.0, 0.7, 0.6}, 0.99) == 0.1 / 0.99);
  // A loss increase is a negative speed, slower than before -> grow.
  CHECK(adapt_lr(0.1, {1.0, 0.9, 0.95}, 0.99) == 0.1 / 0.99);
}

TEST_CASE("adapt_lr replay matches a hand-rolled fold over the loss history") {
  const std::vector<double> losses{2.0, 1.5, 1.3, 1.25, 1.3, 1.1, 1.05, 1.04, 0.9, 0.89};
  const double factor = 0.97;
  double lr = 0.2;
  double replay = 0.2;
  for (std::size_t t = 1; t <= losses.size(); ++t) {
    const std::vector<double> seen(losses.begin(), losses.begin() + t);
    lr = adapt_lr(lr, seen, factor);
    if (t >= 3) {
      const double speed_now = seen[t - 2] - seen[t - 1];
      const double speed_before = seen[t - 3] - seen[t - 2];
      replay = speed_now > speed_before ? replay * factor : replay / factor;
      replay = std::min(1.0, std::max(1e-8, replay));
    }
    CHECK(lr == replay);
  }
}

TEST_CASE("adapt_lr clamps to its range and validates the factor") {
  CHECK(adapt_lr(1e-8, {1.0, 0.9, 0.7}, 0.5) == 1e-8);
  CHECK(adapt_lr(1.0, {1.0, 0.7, 0.6}, 0.5) == 1.0);
  CHECK_THROWS_AS(adapt_lr(0.1, {1.0, 0.9, 0.8}, 0.0), ConstraintError);
  CHECK_THROWS_AS(adapt_lr(0.1, {1.0, 0.9, 0.8}, 1.0), ConstraintError);
  CHECK_THROWS_AS(adapt_lr(0.1, {1.0, 0.9, 0.8}, -0.5), ConstraintError);
}

TEST_CASE("sgd_step without momentum is plain gradient descent") {
  Matrix params(2, 2, 1.0);
  Matrix velocity(2, 2, 0.0);
  Matrix grad(2, 2, 0.25);
  sgd_step(params, velocity, grad, 1.0, 0.0);
  for (double v : params.data()) CHECK(v == 0.75);
}

TEST_CASE("sgd_step leaves zero-gradient entries untouched") {
  Matrix params = Matrix::from_rows({{1.0, 2.0}});
  Matrix velocity(1, 2, 0.0);
  Matrix grad = Matrix::from_rows({{0.0, 1.0}});
  sgd_step(params, velocity, grad, 0.5, 0.9);
  sgd_step(params, velocity, grad, 0.5, 0.9);
  CHECK(params(0, 0) == 1.0);  // masked entry never moves
  CHECK(params(0, 1) < 2.0);
}

TEST_CASE("sgd_step accumulates classical momentum on a quadratic") {
  std::vector<double> x{1.0};
  std::vector<double> v{0.0};
  const double lr = 0.1, momentum = 0.9;
  std::vector<double> seen;
  for (int step = 0; step < 3; ++step) {
    const std::vector<double> grad{x[0]};  // d/dx of x^2/2
    sgd_step(x, v, grad, lr, momentum);
    seen.push_back(x[0]);
  }
  CHECK(seen[0] == doctest::Approx(0.9));
  CHECK(seen[1] == doctest::Approx(0.72));
  CHECK(seen[2] == doctest::Approx(0.486));
}

TEST_CASE("sgd_step rejects mismatched shapes") {
  Matrix params(2, 2);
  Matrix velocity(2, 2);
  CHECK_THROWS_AS(sgd_step(params, velocity, Matrix(2, 3), 0.1, 0.9), DimensionError);
  std::vector<double> p{1.0}, v{0.0};
  CHECK_THROWS_AS(sgd_step(p, v, std::vector<double>{1.0, 2.0}, 0.1, 0.9), DimensionError);
}

TEST_CASE("macro_accuracy averages per-class accuracies with first-wins argmax") {
  TrainResult model;
  model.operators.mats = {Matrix::from_rows({{1.0}})};
  model.filters.w = {Matrix::from_rows({{1.0, -1.0}})};
  model.filters.head = Matrix::identity(2);
  model.filters.head_bias = {0.0, 0.0};
  model.classes = {"neg", "pos"};
  model.config.k = 1;
  model.config.differential = false;

  // relu kills the losing channel: u=2 -> class 0, u=-3 -> class 1,
  // u=0 -> tie on (0,0), argmax takes the first class.
  std::vector<LabeledSample> samples(3);
  samples[0].u = Matrix::from_rows({{2.0}});
  samples[0].label = 0;
  samples[1].u = Matrix::from_rows({{-3.0}});
  samples[1].label = 1;
  samples[2].u = Matrix::from_rows({{0.0}});
  samples[2].label = 1;

  CHECK(macro_accuracy(model, samples) == 0.75);  // class 0: 1/1, class 1: 1/2
  CHECK(macro_accuracy(model, {}) == 0.0);
  CHECK(macro_accuracy(model, {samples[0]}) == 1.0);  // only one class present
}

TEST_CASE("train records one metrics line per epoch and is byte-deterministic") {
  const TrainTask task = tiny_task();
  const TrainConfig config = tiny_config();

  std::ostringstream first, second;
  const TrainResult a = train(config, task, &first);
  const TrainResult b = train(config, task, &second);

  CHECK(a.history.size() == 3);
  CHECK(first.str() == second.str());
  const std::string stream_text = first.str();
  CHECK(std::count(stream_text.begin(), stream_text.end(), '\n') == 3);
  for (const EpochMetrics& m : a.history) {
    CHECK(std::isfinite(m.loss));
    CHECK(m.gamma_eff == 0.0);              // orth inactive
    CHECK_FALSE(m.max_overlap.has_value());
  }
  CHECK(a.final_gamma == 0.0);
  CHECK(a.operators.mats.size() == 2);
  CHECK(a.classes == task.classes);

  TrainConfig reseeded = config;
  reseeded.seed = 8;
  std::ostringstream third;
  train(reseeded, task, &third);
  CHECK(third.str() != first.str());
}

TEST_CASE("dry runs and zero-epoch runs emit identical epoch-0 metrics") {
  const TrainTask task = tiny_task();
  TrainConfig dry = tiny_config();
  dry.dry_run = true;
  dry.epochs = 40;

  TrainConfig zero = tiny_config();
  zero.epochs = 0;

  std::ostringstream dry_out, zero_out;
  const TrainResult a = train(dry, task, &dry_out);
  const TrainResult b = train(zero, task, &zero_out);
  CHECK(a.history.size() == 1);
  CHECK(a.history[0].epoch == 0);
  CHECK(dry_out.str() == zero_out.str());
}

TEST_CASE("train reports divergence with the failing epoch") {
  const TrainTask task = tiny_task();
  TrainConfig config = tiny_config();
  config.lr0 = 1e18;
  config.epochs = 12;
  config.noise_policy = NoisePolicy::kNone;
  CHECK_THROWS_WITH_AS(train(config, task, nullptr), doctest::Contains("diverged"),
                       NumericError);
}

TEST_CASE("train validates its task and hyperparameters") {
  const TrainTask task = tiny_task();
  const TrainConfig config = tiny_config();

  TrainTask empty_train = task;
  empty_train.train.clear();
  CHECK_THROWS_AS(train(config, empty_train, nullptr), DataError);

  TrainTask one_class = task;
  one_class.classes = {"only"};
  for (LabeledSample& s : one_class.train) s.label = 0;
  for (LabeledSample& s : one_class.test) s.label = 0;
  CHECK_THROWS_AS(train(config, one_class, nullptr), DataError);

  TrainConfig no_ops = config;
  no_ops.k = 0;
  CHECK_THROWS_AS(train(no_ops, task, nullptr), ConstraintError);

  TrainConfig no_batch = config;
  no_batch.batch_size = 0;
  CHECK_THROWS_AS(train(no_batch, task, nullptr), ConstraintError);

  TrainConfig bad_momentum = config;
  bad_momentum.momentum = 1.0;
  CHECK_THROWS_AS(train(bad_momentum, task, nullptr), ConstraintError);

  TrainTask bad_label = task;
  bad_label.train[0].label = 99;
  CHECK_THROWS_AS(train(config, bad_label, nullptr), DataError);

  TrainTask bad_shape = task;
  bad_shape.train[0].u = Matrix(5, 4);
  CHECK_THROWS_AS(train(config, bad_shape, nullptr), DimensionError);
}

TEST_CASE("handcrafted operators stay frozen through training") {
  const TrainTask task = tiny_task();
  TrainConfig config = tiny_config();
  config.mode = OperatorMode::kHpm;
  config.constraint = ConstraintKind::kStc;

  const TrainResult result = train(config, task, nullptr);
  CHECK(result.fixed_operators);
  const OperatorSet expected = build_operator_set(OperatorMode::kHpm, task.skeleton,
                                                  config.constraint_spec(), config.k, config.seed);
  REQUIRE(result.free_basis.mats.size() == expected.basis.mats.size());
  for (std::size_t k = 0; k < expected.basis.mats.size(); ++k)
    CHECK(result.free_basis.mats[k] == expected.basis.mats[k]);
}

TEST_CASE("masked operators keep masked entries at exactly zero through training") {
  const TrainTask task = tiny_task();
  TrainConfig config = tiny_config();
  config.mode = OperatorMode::kLpm;
  config.epochs = 5;

  const TrainResult result = train(config, task, nullptr);
  CHECK_FALSE(result.fixed_operators);
  REQUIRE(result.free_basis.masks.size() == result.free_basis.mats.size());
  bool any_moved = false;
  for (std::size_t k = 0; k < result.free_basis.mats.size(); ++k) {
    const Matrix& mat = result.free_basis.mats[k];
    const Matrix& mask = result.free_basis.masks[k];
    for (std::size_t i = 0; i < mat.size(); ++i)
      if (mask.data()[i] == 0.0)
        CHECK(mat.data()[i] == 0.0);
      else
        any_moved = true;
  }
  CHECK(any_moved);
  CHECK_NOTHROW(result.free_basis.validate());
}

TEST_CASE("a model artifact survives a save/load round trip") {
  const TrainTask task = tiny_task();
  const TrainResult model = train(tiny_config(), task, nullptr);

  TempPath file("model.bin");
  save_model(file.path, model);
  const TrainResult loaded = load_model(file.path);

  REQUIRE(loaded.operators.mats.size() == model.operators.mats.size());
  for (std::size_t k = 0; k < model.operators.mats.size(); ++k)
    CHECK(loaded.operators.mats[k] == model.operators.mats[k]);
  CHECK(loaded.classes == model.classes);
  CHECK(loaded.config.k == model.config.k);
  CHECK(loaded.config.mode == model.config.mode);
  CHECK(loaded.config.constraint == model.config.constraint);
  CHECK(loaded.filters.head == model.filters.head);
  CHECK(macro_accuracy(loaded, task.test) == macro_accuracy(model, task.test));
}

TEST_CASE("load_model rejects truncated files and foreign magic") {
  const TrainTask task = tiny_task();
  const TrainResult model = train(tiny_config(), task, nullptr);

  TempPath file("model_cut.bin");
  save_model(file.path, model);
  {
    std::ifstream in(file.path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(bytes.size() > 40);
    std::ofstream out(file.path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_WITH_AS(load_model(file.path), doctest::Contains("truncated"), DataError);

  TempPath magic("model_magic.bin");
  {
    std::ofstream out(magic.path, std::ios::binary);
    out << "NOTAMODELNOTAMODELNOTAMODELNOTAMODEL";
  }
  CHECK_THROWS_AS(load_model(magic.path), DataError);
  CHECK_THROWS_AS(load_model("no_such_model_file.bin"), DataError);
}

TEST_CASE("the ablation grid marks impossible cells and reports the rest") {
  const TrainTask task = tiny_task();
  TrainConfig base = tiny_config();
  base.epochs = 1;

  std::ostringstream progress;
  const AblationReport report =
      run_ablation_grid(base, task, {OperatorMode::kOurs}, {1, 2},
                        {ConstraintKind::kNone, ConstraintKind::kOrth}, &progress);

  REQUIRE(report.rows.size() == 2);
  REQUIRE(report.columns.size() == 2);
  REQUIRE(report.rows[0].cells.size() == 2);
  CHECK(report.rows[0].k == 1);
  CHECK_FALSE(report.rows[0].cells[0].not_applicable);  // none works with k=1
  CHECK(report.rows[0].cells[1].not_applicable);        // orth needs k >= 2
  CHECK_FALSE(report.rows[1].cells[1].not_applicable);

  const std::string json = report.to_json();
  CHECK(json.find("\"format\":1") != std::string::npos);
  CHECK(json.find("\"na\":true") != std::string::npos);
  CHECK(json.find("\"mode\":\"ours\"") != std::string::npos);

  const std::string log = progress.str();
  CHECK(log.find("mode=ours k=1") != std::string::npos);
  CHECK(log.find("n/a") != std::string::npos);
}

TEST_CASE("orth training reports overlaps within tolerance at the annealed temperature") {
  const TrainTask task = tiny_task();
  TrainConfig config = tiny_config();
  config.constraint = ConstraintKind::kOrthStc;
  config.k = 2;
  config.epochs = 4;
  config.delta = 1e-6;  // entries need not separate much in 4 epochs

  const TrainResult result = train(config, task, nullptr);
  const ConstraintSpec spec = config.constraint_spec();
  REQUIRE(result.history.size() == 4);
  for (std::size_t e = 0; e < 4; ++e) {
    // Epochs are numbered 1..epochs inside the loop, so the final epoch
    // trains at the full gamma_base.
    CHECK(result.history[e].epoch == e + 1);
    CHECK(result.history[e].gamma_eff == anneal_gamma(spec.crispmax, e + 1));
    REQUIRE(result.history[e].max_overlap.has_value());
  }
  CHECK(result.final_gamma == result.history.back().gamma_eff);

  // The stored operators are exactly the constrained view of the stored
  // free basis at the stored temperature.
  const ConstrainContext ctx = constrain(result.free_basis, spec, result.final_gamma);
  REQUIRE(ctx.output.mats.size() == result.operators.mats.size());
  for (std::size_t k = 0; k < ctx.output.mats.size(); ++k)
    CHECK(ctx.output.mats[k] == result.operators.mats[k]);
}

}  // TEST_SUITE
