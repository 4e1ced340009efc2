// Command-line front end: train / eval / ablate / gradcheck / bound / chunk.
//
// Exit codes: 0 success, 1 usage or constraint violation, 2 data error,
// 3 numeric failure.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctxgcn/baselines.hpp"
#include "ctxgcn/data.hpp"
#include "ctxgcn/gradcheck.hpp"
#include "ctxgcn/reparam.hpp"
#include "ctxgcn/trainer.hpp"
#include "json.hpp"

namespace {

using namespace ctxgcn;

// ---------------------------------------------------------------------------
// Data source shared by train / ablate / eval.

struct DataOptions {
  bool synthetic = false;
  SynthesisConfig synth;
  std::string data_path;
  std::string test_path;
  std::string fold_path;
  double fraction = -1.0;  // negative: unset
  std::uint64_t split_seed = 1;
  std::string skeleton_path;
};

void add_data_options(CLI::App* cmd, DataOptions& opt) {
  cmd->add_flag("--synthetic", opt.synthetic,
                "generate the built-in hidden-graph synthetic task");
  cmd->add_option("--synth_nodes", opt.synth.node_count, "synthetic joint count");
  cmd->add_option("--synth_classes", opt.synth.class_count, "synthetic class count");
  cmd->add_option("--synth_samples", opt.synth.samples_per_class,
                  "synthetic samples per class");
  cmd->add_option("--synth_frames", opt.synth.frame_count, "synthetic frames per sequence");
  cmd->add_option("--synth_noise", opt.synth.noise_std, "synthetic coordinate noise std");
  cmd->add_option("--hidden_seed", opt.synth.hidden_adjacency_seed,
                  "seed of the hidden graph and class patterns");
  cmd->add_option("--synth_seed", opt.synth.seed, "seed of the sampled sequences");
  cmd->add_option("--data", opt.data_path, "training sequences (JSONL)");
  cmd->add_option("--test", opt.test_path, "held-out sequences (JSONL)");
  cmd->add_option("--fold", opt.fold_path, "fold file with explicit train/test indices");
  cmd->add_option("--fraction", opt.fraction, "seeded fraction of --data sent to train");
  cmd->add_option("--split_seed", opt.split_seed, "seed for --fraction splits");
  cmd->add_option("--skeleton", opt.skeleton_path,
                  "skeleton graph JSON (default: chain over the joints)");
}

SkeletonAdjacency load_skeleton_file(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw DataError("cannot open skeleton file '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(file);
  } catch (const nlohmann::json::exception& error) {
    throw DataError("skeleton file '" + path + "': invalid JSON: " + error.what());
  }
  if (!doc.is_object() || !doc.contains("format") || doc["format"] != 1)
    throw DataError("skeleton file '" + path + "': missing or unsupported \"format\"");
  if (!doc.contains("joints") || !doc["joints"].is_number_unsigned())
    throw DataError("skeleton file '" + path + "': missing \"joints\" count");
  if (!doc.contains("edges") || !doc["edges"].is_array())
    throw DataError("skeleton file '" + path + "': missing \"edges\" array");
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& edge : doc["edges"]) {
    if (!edge.is_array() || edge.size() != 2 || !edge[0].is_number_unsigned() ||
        !edge[1].is_number_unsigned())
      throw DataError("skeleton file '" + path + "': edge " + edge.dump() +
                      " is not an index pair");
    edges.emplace_back(edge[0].get<std::size_t>(), edge[1].get<std::size_t>());
  }
  return SkeletonAdjacency::make(doc["joints"].get<std::size_t>(), std::move(edges));
}

TrainTask build_task(const DataOptions& opt, std::size_t chunk_count) {
  if (opt.synthetic) {
    if (!opt.data_path.empty())
      throw ConstraintError("--synthetic and --data are mutually exclusive");
    const SynthesizedTask synth = synthesize_task(opt.synth);
    const SkeletonAdjacency skeleton = opt.skeleton_path.empty()
                                           ? synth.nominal_skeleton
                                           : load_skeleton_file(opt.skeleton_path);
    return make_task(synth.train, synth.test, chunk_count, skeleton);
  }
  if (opt.data_path.empty())
    throw ConstraintError("a data source is required: --synthetic or --data");
  const int side_choices = static_cast<int>(!opt.test_path.empty()) +
                           static_cast<int>(!opt.fold_path.empty()) +
                           static_cast<int>(opt.fraction >= 0.0);
  if (side_choices != 1)
    throw ConstraintError("with --data, choose exactly one of --test, --fold, --fraction");

  const std::vector<SkeletonSequence> sequences = load_sequences(opt.data_path);
  if (sequences.empty()) throw DataError("'" + opt.data_path + "' holds no sequences");
  std::vector<SkeletonSequence> train_side, test_side;
  if (!opt.test_path.empty()) {
    train_side = sequences;
    test_side = load_sequences(opt.test_path);
  } else {
    const IndexSplit split = opt.fold_path.empty()
                                 ? split_by_fraction(sequences.size(), opt.fraction,
                                                     opt.split_seed)
                                 : load_fold_file(opt.fold_path, sequences.size());
    for (const std::size_t index : split.train) train_side.push_back(sequences[index]);
    for (const std::size_t index : split.test) test_side.push_back(sequences[index]);
  }
  const SkeletonAdjacency skeleton =
      opt.skeleton_path.empty() ? SkeletonAdjacency::chain(sequences.front().joint_count())
                                : load_skeleton_file(opt.skeleton_path);
  return make_task(train_side, test_side, chunk_count, skeleton);
}

// ---------------------------------------------------------------------------
// TrainConfig flags. Long names equal the config-file keys.

struct EnumStrings {
  std::string constraint = "none";
  std::string mode = "ours";
  std::string noise_policy = "per_step";
  std::string config_path;
};

void add_train_config(CLI::App* cmd, TrainConfig& config, EnumStrings& strings) {
  cmd->add_option("--config", strings.config_path,
                  "flat key=value file; keys match the flag names");
  cmd->add_option("--epochs", config.epochs, "training epochs");
  cmd->add_option("--batch_size", config.batch_size, "batch size (clipped to dataset)");
  cmd->add_option("--momentum", config.momentum, "SGD momentum");
  cmd->add_option("--lr0", config.lr0, "initial learning rate");
  cmd->add_option("--lr_factor", config.lr_factor, "adaptive learning-rate factor");
  cmd->add_option("--constraint", strings.constraint,
                  "none|sym|stc|orth|sym+orth|orth+stc");
  cmd->add_option("--mode", strings.mode, "hpm|lpm|ours");
  cmd->add_option("--k", config.k, "operator count");
  cmd->add_option("--gamma_base", config.gamma_base,
                  "crispmax temperature (<= 0: derive from the bound)");
  cmd->add_option("--epsilon", config.epsilon, "orthogonality tolerance");
  cmd->add_option("--delta", config.delta, "assumed entry separation");
  cmd->add_option("--noise_std", config.noise_std, "parameter noise std");
  cmd->add_option("--noise_policy", strings.noise_policy, "none|init_only|per_step");
  cmd->add_option("--m", config.m, "temporal chunks per sequence");
  cmd->add_option("--seed", config.seed, "master seed");
  cmd->add_option("--channels", config.channels, "convolution output channels");
  cmd->add_flag("--differential", config.differential, "aggregate with (I - A_k)");
  cmd->add_flag("--anneal,!--no_anneal", config.anneal, "linear gamma annealing");
  cmd->add_flag("--dry_run", config.dry_run, "emit initial metrics only");
}

void resolve_enums(TrainConfig& config, const EnumStrings& strings) {
  config.constraint = parse_constraint_kind(strings.constraint);
  config.mode = parse_operator_mode(strings.mode);
  config.noise_policy = parse_noise_policy(strings.noise_policy);
}

std::vector<LabeledSample> samples_for_model(const TrainResult& model,
                                             const std::vector<SkeletonSequence>& sequences) {
  const std::size_t joints = model.free_basis.node_count();
  std::vector<LabeledSample> samples;
  samples.reserve(sequences.size());
  for (const auto& sequence : sequences) {
    if (sequence.joint_count() != joints)
      throw DataError("sequence labeled '" + sequence.label + "' has " +
                      std::to_string(sequence.joint_count()) + " joints, the model expects " +
                      std::to_string(joints));
    samples.push_back({temporal_chunk(sequence, model.config.m).u,
                       class_index(model.classes, sequence.label)});
  }
  return samples;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) parts.push_back(item);
  return parts;
}

std::string trim_copy(const std::string& text) {
  const auto begin = text.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = text.find_last_not_of(" \t\r");
  return text.substr(begin, end - begin + 1);
}

// CLI11 only processes config files attached to the root command, so each
// subcommand applies its own flat key=value file after parsing. Values given
// on the command line win over the file.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  std::ifstream file(path);
  if (!file) throw ConstraintError("cannot open config file '" + path + "'");
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(file, line)) {
    ++line_number;
    const std::string here = path + ":" + std::to_string(line_number);
    const std::string text = trim_copy(line);
    if (text.empty() || text[0] == '#') continue;
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos)
      throw ConstraintError(here + ": expected key=value, got '" + text + "'");
    const std::string key = trim_copy(text.substr(0, eq));
    const std::string value = trim_copy(text.substr(eq + 1));
    if (key.empty()) throw ConstraintError(here + ": empty key");
    if (key == "config")
      throw ConstraintError(here + ": 'config' cannot be set from a config file");
    CLI::Option* option = cmd->get_option_no_throw("--" + key);
    if (option == nullptr) throw ConstraintError(here + ": unknown key '" + key + "'");
    if (option->count() > 0) continue;  // the command line wins
    if (option->get_expected_min() == 0) {
      option->add_result(option->get_flag_value(key, value.empty() ? "true" : value));
    } else {
      option->add_result(value);
    }
    option->run_callback();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph convolutional networks with learned context matrices"};
  app.require_subcommand(1);

  // --- train ---------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train a model and stream epoch metrics");
  auto train_opt = std::make_shared<DataOptions>();
  auto train_config = std::make_shared<TrainConfig>();
  auto train_strings = std::make_shared<EnumStrings>();
  auto train_out = std::make_shared<std::string>();
  auto train_metrics = std::make_shared<std::string>();
  add_train_config(train_cmd, *train_config, *train_strings);
  add_data_options(train_cmd, *train_opt);
  train_cmd->add_option("--out", *train_out, "model artifact output path");
  train_cmd->add_option("--metrics", *train_metrics, "metrics JSONL path (default stdout)");
  train_cmd->callback([train_cmd, train_opt, train_config, train_strings, train_out,
                       train_metrics]() {
    if (!train_strings->config_path.empty())
      apply_config_file(train_cmd, train_strings->config_path);
    if (train_cmd->count("--seed") == 0) throw ConstraintError("--seed is required");
    resolve_enums(*train_config, *train_strings);
    const TrainTask task = build_task(*train_opt, train_config->m);
    std::ofstream metrics_file;
    std::ostream* metrics = &std::cout;
    if (!train_metrics->empty()) {
      metrics_file.open(*train_metrics, std::ios::trunc);
      if (!metrics_file)
        throw DataError("cannot open metrics path '" + *train_metrics + "' for writing");
      metrics = &metrics_file;
    }
    const TrainResult model = train(*train_config, task, metrics);
    if (!train_out->empty()) save_model(*train_out, model);
    const EpochMetrics& last = model.history.back();
    std::cerr << "trained " << model.history.size() << " epoch records; final train_acc="
              << format_double(last.train_acc) << " test_acc=" << format_double(last.test_acc)
              << "\n";
  });

  // --- eval ----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a saved model");
  auto eval_opt = std::make_shared<DataOptions>();
  auto eval_model = std::make_shared<std::string>();
  add_data_options(eval_cmd, *eval_opt);
  eval_cmd->add_option("--model", *eval_model, "model artifact path")->required();
  eval_cmd->callback([eval_opt, eval_model]() {
    const TrainResult model = load_model(*eval_model);
    std::vector<SkeletonSequence> sequences;
    if (eval_opt->synthetic) {
      sequences = synthesize_task(eval_opt->synth).test;  // held-out side
    } else if (!eval_opt->data_path.empty()) {
      sequences = load_sequences(eval_opt->data_path);
    } else {
      throw ConstraintError("eval needs --synthetic or --data");
    }
    if (sequences.empty()) throw DataError("nothing to evaluate");
    const std::vector<LabeledSample> samples = samples_for_model(model, sequences);
    std::cout << "{\"macro_accuracy\":" << format_double(macro_accuracy(model, samples))
              << ",\"samples\":" << samples.size() << "}\n";
  });

  // --- ablate --------------------------------------------------------------
  auto* ablate_cmd = app.add_subcommand("ablate", "run the mode x constraint x K grid");
  auto ablate_opt = std::make_shared<DataOptions>();
  auto ablate_config = std::make_shared<TrainConfig>();
  auto ablate_strings = std::make_shared<EnumStrings>();
  auto ablate_modes = std::make_shared<std::string>("hpm,lpm,ours");
  auto ablate_ks = std::make_shared<std::string>("1,4,8");
  auto ablate_specs = std::make_shared<std::string>("none,stc,sym,orth,sym+orth,orth+stc");
  auto ablate_out = std::make_shared<std::string>();
  add_train_config(ablate_cmd, *ablate_config, *ablate_strings);
  add_data_options(ablate_cmd, *ablate_opt);
  ablate_cmd->add_option("--modes", *ablate_modes, "comma list of operator modes");
  ablate_cmd->add_option("--ks", *ablate_ks, "comma list of operator counts");
  ablate_cmd->add_option("--specs", *ablate_specs, "comma list of constraint specs");
  ablate_cmd->add_option("--out", *ablate_out, "report path (default stdout)");
  ablate_cmd->callback([ablate_cmd, ablate_opt, ablate_config, ablate_strings, ablate_modes,
                        ablate_ks, ablate_specs, ablate_out]() {
    if (!ablate_strings->config_path.empty())
      apply_config_file(ablate_cmd, ablate_strings->config_path);
    resolve_enums(*ablate_config, *ablate_strings);
    const TrainTask task = build_task(*ablate_opt, ablate_config->m);
    std::vector<OperatorMode> modes;
    for (const auto& name : split_list(*ablate_modes)) modes.push_back(parse_operator_mode(name));
    std::vector<std::size_t> op_counts;
    for (const auto& text : split_list(*ablate_ks)) {
      std::size_t value = 0;
      try {
        value = std::stoull(text);
      } catch (const std::exception&) {
        throw ConstraintError("--ks holds a non-integer '" + text + "'");
      }
      if (value == 0) throw ConstraintError("--ks entries must be >= 1");
      op_counts.push_back(value);
    }
    std::vector<ConstraintKind> kinds;
    for (const auto& name : split_list(*ablate_specs)) kinds.push_back(parse_constraint_kind(name));
    if (modes.empty() || op_counts.empty() || kinds.empty())
      throw ConstraintError("ablate: empty grid axis");
    const AblationReport report =
        run_ablation_grid(*ablate_config, task, modes, op_counts, kinds, &std::cerr);
    if (ablate_out->empty()) {
      std::cout << report.to_json() << "\n";
    } else {
      std::ofstream file(*ablate_out, std::ios::trunc);
      if (!file) throw DataError("cannot open report path '" + *ablate_out + "' for writing");
      file << report.to_json() << "\n";
    }
  });

  // --- gradcheck -------------------------------------------------------------
  auto* grad_cmd = app.add_subcommand(
      "gradcheck", "compare analytic gradients against central finite differences");
  auto grad_instance = std::make_shared<GradCheckInstance>();
  auto grad_strings = std::make_shared<EnumStrings>();
  auto grad_tol = std::make_shared<double>(1e-5);
  grad_cmd->add_option("--spec", grad_strings->constraint,
                       "none|sym|stc|orth|sym+orth|orth+stc");
  grad_cmd->add_option("--mode", grad_strings->mode, "hpm|lpm|ours");
  grad_cmd->add_option("--k", grad_instance->op_count, "operator count");
  grad_cmd->add_option("--n", grad_instance->node_count, "node count");
  grad_cmd->add_option("--s", grad_instance->signal_dim, "signal dimension");
  grad_cmd->add_option("--channels", grad_instance->channels, "convolution channels");
  grad_cmd->add_option("--classes", grad_instance->class_count, "head outputs");
  grad_cmd->add_flag("--differential", grad_instance->differential, "aggregate with (I - A_k)");
  grad_cmd->add_option("--gamma", grad_instance->gamma_eff, "crispmax temperature");
  grad_cmd->add_option("--seed", grad_instance->seed, "instance seed");
  grad_cmd->add_option("--tol", *grad_tol, "maximum relative error accepted");
  grad_cmd->callback([grad_instance, grad_strings, grad_tol]() {
    grad_instance->constraint = parse_constraint_kind(grad_strings->constraint);
    grad_instance->mode = parse_operator_mode(grad_strings->mode);
    const GradCheckReport report = run_gradcheck(*grad_instance);
    for (const auto& group : report.groups)
      std::cout << "group=" << group.name << " parameters=" << group.parameter_count
                << " max_rel=" << format_double(group.max_rel) << "\n";
    std::cout << "overall=" << format_double(report.overall()) << " tol="
              << format_double(*grad_tol) << "\n";
    if (!report.ok(*grad_tol))
      throw NumericError("gradient check failed: max relative error " +
                         format_double(report.overall()) + " >= " + format_double(*grad_tol));
  });

  // --- bound -----------------------------------------------------------------
  auto* bound_cmd =
      app.add_subcommand("bound", "print the crispmax temperature lower bound");
  auto bound_k = std::make_shared<std::size_t>(2);
  auto bound_delta = std::make_shared<double>(0.01);
  auto bound_eps = std::make_shared<double>(0.01);
  bound_cmd->add_option("--k", *bound_k, "operator count")->required();
  bound_cmd->add_option("--delta", *bound_delta, "entry separation");
  bound_cmd->add_option("--eps,--epsilon", *bound_eps, "orthogonality tolerance");
  bound_cmd->callback([bound_k, bound_delta, bound_eps]() {
    std::cout << format_double(gamma_lower_bound(*bound_k, *bound_delta, *bound_eps)) << "\n";
  });

  // --- chunk -----------------------------------------------------------------
  auto* chunk_cmd =
      app.add_subcommand("chunk", "preprocess sequences into chunked descriptors");
  auto chunk_in = std::make_shared<std::string>();
  auto chunk_out = std::make_shared<std::string>();
  auto chunk_m = std::make_shared<std::size_t>(8);
  chunk_cmd->add_option("--in", *chunk_in, "sequences (JSONL)")->required();
  chunk_cmd->add_option("--out", *chunk_out, "descriptor JSONL output")->required();
  chunk_cmd->add_option("--m", *chunk_m, "temporal chunks");
  chunk_cmd->callback([chunk_in, chunk_out, chunk_m]() {
    const std::vector<SkeletonSequence> sequences = load_sequences(*chunk_in);
    std::ofstream file(*chunk_out, std::ios::trunc);
    if (!file) throw DataError("cannot open '" + *chunk_out + "' for writing");
    for (const auto& sequence : sequences) {
      const ChunkedDescriptor descriptor = temporal_chunk(sequence, *chunk_m);
      nlohmann::ordered_json record;
      record["format"] = 1;
      record["label"] = sequence.label;
      record["rows"] = descriptor.u.rows();
      record["cols"] = descriptor.u.cols();
      record["u"] = descriptor.u.data();
      file << record.dump() << "\n";
    }
    if (!file) throw DataError("failed writing descriptors to '" + *chunk_out + "'");
    std::cerr << "chunked " << sequences.size() << " sequences\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& help) {
    return app.exit(help);
  } catch (const CLI::ParseError& error) {
    app.exit(error);
    return 1;
  } catch (const ConstraintError& error) {
    std::cerr << "constraint error: " << error.what() << "\n";
    return 1;
  } catch (const DimensionError& error) {
    std::cerr << "dimension error: " << error.what() << "\n";
    return 2;
  } catch (const DataError& error) {
    std::cerr << "data error: " << error.what() << "\n";
    return 2;
  } catch (const NumericError& error) {
    std::cerr << "numeric error: " << error.what() << "\n";
    return 3;
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 3;
  }
  return 0;
}
