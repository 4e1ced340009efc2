#include "ctxgcn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "ctxgcn/rng.hpp"
#include "json.hpp"

namespace ctxgcn {

ChunkedDescriptor temporal_chunk(const SkeletonSequence& sequence, std::size_t chunk_count) {
  const std::size_t frame_count = sequence.frame_count();
  if (frame_count == 0)
    throw DataError("temporal_chunk: sequence '" + sequence.label + "' has zero frames");
  if (chunk_count == 0) throw ConstraintError("temporal_chunk: chunk count must be >= 1");
  const std::size_t n = sequence.joint_count();
  if (n == 0)
    throw DataError("temporal_chunk: sequence '" + sequence.label + "' has zero joints");

  Matrix sums(3 * chunk_count, n);
  std::vector<std::size_t> counts(chunk_count, 0);
  for (std::size_t t = 0; t < frame_count; ++t) {
    const auto& frame = sequence.frames[t];
    if (frame.size() != n)
      throw DataError("temporal_chunk: frame " + std::to_string(t) + " has " +
                      std::to_string(frame.size()) + " joints, frame 0 has " +
                      std::to_string(n));
    const std::size_t chunk = t * chunk_count / frame_count;
    ++counts[chunk];
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t d = 0; d < 3; ++d) {
        if (!std::isfinite(frame[j][d]))
          throw DataError("temporal_chunk: non-finite coordinate at frame " +
                          std::to_string(t) + ", joint " + std::to_string(j));
        sums(chunk * 3 + d, j) += frame[j][d];
      }
  }

  ChunkedDescriptor descriptor{Matrix(3 * chunk_count, n)};
  for (std::size_t chunk = 0; chunk < chunk_count; ++chunk) {
    // Frame 0 always occupies chunk 0, so a nonempty source exists.
    std::size_t source = chunk;
    for (std::size_t radius = 0; counts[source] == 0; ++radius) {
      if (radius <= chunk && counts[chunk - radius] > 0)
        source = chunk - radius;
      else if (chunk + radius < chunk_count && counts[chunk + radius] > 0)
        source = chunk + radius;
    }
    const double scale = 1.0 / static_cast<double>(counts[source]);
    for (std::size_t d = 0; d < 3; ++d)
      for (std::size_t j = 0; j < n; ++j)
        descriptor.u(chunk * 3 + d, j) = sums(source * 3 + d, j) * scale;
  }
  return descriptor;
}

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void record_error(const std::string& path, std::size_t line_no,
                               const std::string& message) {
  throw DataError(path + ":" + std::to_string(line_no) + ": " + message);
}

SkeletonSequence parse_sequence_record(const json& record, const std::string& path,
                                       std::size_t line_no) {
  if (!record.is_object()) record_error(path, line_no, "record is not a JSON object");
  if (!record.contains("format") || !record["format"].is_number_integer() ||
      record["format"].get<int>() != 1)
    record_error(path, line_no, "missing or unsupported \"format\" (expected 1)");
  if (!record.contains("label") || !record["label"].is_string())
    record_error(path, line_no, "missing string \"label\"");
  if (!record.contains("frames") || !record["frames"].is_array() || record["frames"].empty())
    record_error(path, line_no, "missing nonempty \"frames\" array");

  SkeletonSequence sequence;
  sequence.label = record["label"].get<std::string>();
  const auto& frames = record["frames"];
  sequence.frames.reserve(frames.size());
  std::size_t joints = 0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& frame = frames[t];
    if (!frame.is_array() || frame.empty())
      record_error(path, line_no, "frame " + std::to_string(t) + " is not a nonempty array");
    if (t == 0)
      joints = frame.size();
    else if (frame.size() != joints)
      record_error(path, line_no,
                   "frame " + std::to_string(t) + " has " + std::to_string(frame.size()) +
                       " joints, frame 0 has " + std::to_string(joints));
    std::vector<std::array<double, 3>> parsed(joints);
    for (std::size_t j = 0; j < joints; ++j) {
      const auto& joint = frame[j];
      if (!joint.is_array() || joint.size() != 3)
        record_error(path, line_no,
                     "frame " + std::to_string(t) + " joint " + std::to_string(j) +
                         " is not a 3-vector");
      for (std::size_t d = 0; d < 3; ++d) {
        if (!joint[d].is_number())
          record_error(path, line_no,
                       "frame " + std::to_string(t) + " joint " + std::to_string(j) +
                           " has a malformed coordinate");
        parsed[j][d] = joint[d].get<double>();
        if (!std::isfinite(parsed[j][d]))
          record_error(path, line_no,
                       "frame " + std::to_string(t) + " joint " + std::to_string(j) +
                           " has a non-finite coordinate");
      }
    }
    sequence.frames.push_back(std::move(parsed));
  }
  return sequence;
}

}  // namespace

std::vector<SkeletonSequence> load_sequences(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw DataError("cannot open sequence file '" + path + "'");
  std::vector<SkeletonSequence> sequences;
  std::string line;
  std::size_t line_no = 0;
  std::size_t joints = 0;
  while (std::getline(file, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& error) {
      record_error(path, line_no, std::string("invalid JSON: ") + error.what());
    }
    SkeletonSequence sequence = parse_sequence_record(record, path, line_no);
    if (sequences.empty())
      joints = sequence.joint_count();
    else if (sequence.joint_count() != joints)
      record_error(path, line_no,
                   "record has " + std::to_string(sequence.joint_count()) +
                       " joints, earlier records have " + std::to_string(joints));
    sequences.push_back(std::move(sequence));
  }
  return sequences;
}

void save_sequences(const std::string& path, const std::vector<SkeletonSequence>& sequences) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw DataError("cannot open '" + path + "' for writing");
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const SkeletonSequence& sequence = sequences[i];
    if (sequence.frame_count() == 0)
      throw DataError("save_sequences: record " + std::to_string(i) + " has zero frames");
    json record;
    record["format"] = 1;
    record["label"] = sequence.label;
    json frames = json::array();
    for (std::size_t t = 0; t < sequence.frame_count(); ++t) {
      if (sequence.frames[t].size() != sequence.joint_count())
        throw DataError("save_sequences: record " + std::to_string(i) + " frame " +
                        std::to_string(t) + " has an inconsistent joint count");
      json frame = json::array();
      for (const auto& joint : sequence.frames[t]) {
        for (const double v : joint)
          if (!std::isfinite(v))
            throw DataError("save_sequences: record " + std::to_string(i) +
                            " has a non-finite coordinate");
        frame.push_back(json::array({joint[0], joint[1], joint[2]}));
      }
      frames.push_back(std::move(frame));
    }
    record["frames"] = std::move(frames);
    file << record.dump() << '\n';
  }
  if (!file) throw DataError("failed writing sequences to '" + path + "'");
}

SkeletonSequence convert_sbu_text(const std::string& text, const std::string& label,
                                  std::size_t joint_count) {
  if (joint_count == 0) throw ConstraintError("convert_sbu_text: joint_count must be >= 1");
  SkeletonSequence sequence;
  sequence.label = label;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fail = [&line_no](const std::string& message) {
      throw DataError("convert_sbu_text: line " + std::to_string(line_no) + ": " + message);
    };

    std::vector<std::string> fields;
    std::stringstream row(line);
    std::string token;
    while (std::getline(row, token, ',')) fields.push_back(token);
    // Rows traditionally end with a separator; tolerate a blank last field.
    if (!fields.empty() && fields.back().find_first_not_of(" \t\r") == std::string::npos)
      fields.pop_back();
    const std::size_t expected = 1 + 3 * joint_count;
    if (fields.size() != expected)
      fail("has " + std::to_string(fields.size()) + " fields, expected " +
           std::to_string(expected) + " (frame index + 3 coordinates per joint)");

    std::vector<double> values(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const std::size_t first = fields[i].find_first_not_of(" \t\r");
      if (first == std::string::npos) fail("field " + std::to_string(i) + " is empty");
      const std::size_t last = fields[i].find_last_not_of(" \t\r");
      const std::string trimmed = fields[i].substr(first, last - first + 1);
      double value = 0.0;
      const char* begin = trimmed.data();
      const char* end = begin + trimmed.size();
      const auto [ptr, ec] = std::from_chars(begin, end, value);
      if (ec != std::errc{} || ptr != end) fail("field '" + trimmed + "' is not a number");
      if (!std::isfinite(value)) fail("field '" + trimmed + "' is not finite");
      values[i] = value;
    }

    std::vector<std::array<double, 3>> frame(joint_count);
    for (std::size_t j = 0; j < joint_count; ++j)
      frame[j] = {values[1 + 3 * j], values[2 + 3 * j], values[3 + 3 * j]};
    sequence.frames.push_back(std::move(frame));
  }
  if (sequence.frames.empty()) throw DataError("convert_sbu_text: no frames");
  return sequence;
}

std::vector<std::string> class_names(const std::vector<SkeletonSequence>& sequences) {
  std::vector<std::string> names;
  names.reserve(sequences.size());
  for (const auto& sequence : sequences) names.push_back(sequence.label);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return names;
}

std::size_t class_index(const std::vector<std::string>& names, const std::string& label) {
  const auto it = std::lower_bound(names.begin(), names.end(), label);
  if (it == names.end() || *it != label) throw DataError("unknown label '" + label + "'");
  return static_cast<std::size_t>(it - names.begin());
}

IndexSplit split_by_fraction(std::size_t count, double fraction, std::uint64_t seed) {
  if (count < 2) throw DataError("split_by_fraction: needs at least 2 samples, got " +
                                 std::to_string(count));
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw DataError("split_by_fraction: fraction must lie in [0, 1], got " +
                    std::to_string(fraction));
  const auto train_count =
      static_cast<std::size_t>(std::floor(static_cast<double>(count) * fraction));
  if (train_count == 0) throw DataError("split_by_fraction: train side would be empty");
  if (train_count == count) throw DataError("split_by_fraction: test side would be empty");

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  IndexSplit split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_count));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(train_count), order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

IndexSplit load_fold_file(const std::string& path, std::size_t count) {
  std::ifstream file(path);
  if (!file) throw DataError("cannot open fold file '" + path + "'");
  json fold;
  try {
    fold = json::parse(file);
  } catch (const json::exception& error) {
    throw DataError("fold file '" + path + "': invalid JSON: " + error.what());
  }
  if (!fold.is_object() || !fold.contains("format") ||
      !fold["format"].is_number_integer() || fold["format"].get<int>() != 1)
    throw DataError("fold file '" + path + "': missing or unsupported \"format\" (expected 1)");

  auto read_side = [&fold, &path, count](const char* side) {
    if (!fold.contains(side) || !fold[side].is_array() || fold[side].empty())
      throw DataError("fold file '" + path + "': missing nonempty \"" + side + "\" array");
    std::vector<std::size_t> indices;
    for (const auto& value : fold[side]) {
      if (!value.is_number_integer() || value.get<long long>() < 0)
        throw DataError("fold file '" + path + "': \"" + side +
                        "\" holds a non-index value " + value.dump());
      const auto index = value.get<unsigned long long>();
      if (index >= count)
        throw DataError("fold file '" + path + "': index " + std::to_string(index) +
                        " out of range for " + std::to_string(count) + " samples");
      indices.push_back(static_cast<std::size_t>(index));
    }
    return indices;
  };

  IndexSplit split;
  split.train = read_side("train");
  split.test = read_side("test");
  std::set<std::size_t> seen;
  auto claim = [&seen, &path](const std::vector<std::size_t>& side) {
    for (const std::size_t index : side)
      if (!seen.insert(index).second)
        throw DataError("fold file '" + path + "': index " + std::to_string(index) +
                        " appears twice");
  };
  claim(split.train);
  claim(split.test);
  if (seen.size() != count)
    throw DataError("fold file '" + path + "': covers " + std::to_string(seen.size()) +
                    " of " + std::to_string(count) + " samples; folds must be exhaustive");
  return split;
}

namespace {

using EdgeSet = std::set<std::pair<std::size_t, std::size_t>>;

EdgeSet reversed_edges(const EdgeSet& edges, std::size_t n) {
  EdgeSet out;
  for (const auto& [i, j] : edges)
    out.insert({std::min(n - 1 - i, n - 1 - j), std::max(n - 1 - i, n - 1 - j)});
  return out;
}

// Samples an Erdos-Renyi graph until it differs from the chain and is not
// fixed by node reversal, so chain-symmetric pipelines cannot see it.
SkeletonAdjacency sample_hidden_graph(std::size_t n, const SkeletonAdjacency& chain, Rng& rng) {
  if (n == 2) return SkeletonAdjacency::make(2, {});  // only the chain edge exists
  const EdgeSet chain_edges(chain.edges.begin(), chain.edges.end());
  for (int attempt = 0; attempt < 10000; ++attempt) {
    EdgeSet edges;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng.uniform() < 0.35) edges.insert({i, j});
    if (edges.empty()) continue;
    if (edges == chain_edges) continue;
    if (edges == reversed_edges(edges, n)) continue;
    return SkeletonAdjacency::make(
        n, std::vector<std::pair<std::size_t, std::size_t>>(edges.begin(), edges.end()));
  }
  throw DataError("synthesize_task: could not sample an asymmetric hidden graph");
}

std::vector<double> reversed(const std::vector<double>& values) {
  return {values.rbegin(), values.rend()};
}

// Amplitude pattern a = (A_hidden + I) d, rescaled to max |a_u| = amp and
// resampled until far from its own reversal, so each orientation pair is
// genuinely two classes.
std::vector<double> sample_pattern(const Matrix& hidden, double amp, Rng& rng) {
  const std::size_t n = hidden.rows();
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::vector<double> seed_pattern(n), pattern(n);
    for (double& v : seed_pattern) v = rng.normal();
    for (std::size_t u = 0; u < n; ++u) {
      double sum = seed_pattern[u];
      for (std::size_t v = 0; v < n; ++v) sum += hidden(u, v) * seed_pattern[v];
      pattern[u] = sum;
    }
    double peak = 0.0;
    for (const double v : pattern) peak = std::max(peak, std::abs(v));
    if (peak == 0.0) continue;
    for (double& v : pattern) v *= amp / peak;
    const std::vector<double> flipped = reversed(pattern);
    double gap = 0.0;
    for (std::size_t u = 0; u < n; ++u)
      gap = std::max(gap, std::abs(pattern[u] - flipped[u]));
    if (gap >= 0.5 * amp) return pattern;
  }
  throw DataError("synthesize_task: could not sample a reversal-separated pattern");
}

std::string class_label(std::size_t index) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "class_%03zu", index);
  return buffer;
}

}  // namespace

SynthesizedTask synthesize_task(const SynthesisConfig& config) {
  if (config.node_count < 2)
    throw ConstraintError("synthesize_task: needs node_count >= 2 so reversal can act");
  if (config.class_count == 0 || config.samples_per_class == 0 || config.frame_count == 0)
    throw ConstraintError("synthesize_task: counts must be >= 1");
  if (!(config.noise_std >= 0.0) || !std::isfinite(config.noise_std))
    throw ConstraintError("synthesize_task: noise_std must be finite and >= 0");

  const std::size_t n = config.node_count;
  SynthesizedTask task;
  task.nominal_skeleton = SkeletonAdjacency::chain(n);

  Rng structure_rng(config.hidden_adjacency_seed);
  task.hidden_adjacency = sample_hidden_graph(n, task.nominal_skeleton, structure_rng);
  const Matrix hidden = task.hidden_adjacency.adjacency();

  constexpr double kAmplitude = 2.0;
  const std::size_t pair_count = (config.class_count + 1) / 2;
  std::vector<std::vector<double>> loadings;
  for (std::size_t b = 0; b < pair_count; ++b) {
    const std::vector<double> base = sample_pattern(hidden, kAmplitude, structure_rng);
    loadings.push_back(base);
    if (loadings.size() < config.class_count) loadings.push_back(reversed(base));
  }

  // Carrier wave shared by every class; only the per-node amplitude pattern
  // carries class identity.
  const std::size_t frames = config.frame_count;
  std::vector<std::array<double, 3>> carrier(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const double theta =
        2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(frames);
    carrier[t] = {std::sin(theta), std::cos(theta), std::sin(2.0 * theta)};
  }

  Rng sample_rng(config.seed);
  const std::size_t train_per_class = (config.samples_per_class * 7 + 9) / 10;  // ceil(0.7 m)
  for (std::size_t c = 0; c < config.class_count; ++c) {
    for (std::size_t s = 0; s < config.samples_per_class; ++s) {
      SkeletonSequence sequence;
      sequence.label = class_label(c);
      sequence.frames.assign(frames, std::vector<std::array<double, 3>>(n));
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t u = 0; u < n; ++u)
          for (std::size_t d = 0; d < 3; ++d) {
            double value = loadings[c][u] * carrier[t][d];
            if (config.noise_std > 0.0) value += config.noise_std * sample_rng.normal();
            sequence.frames[t][u][d] = value;
          }
      (s < train_per_class ? task.train : task.test).push_back(std::move(sequence));
    }
  }
  return task;
}

}  // namespace ctxgcn
