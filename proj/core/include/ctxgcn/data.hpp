// Sequence data: temporal chunking, JSONL IO, splits, and a synthetic task
// whose labels hinge on a hidden graph rather than the nominal skeleton.

#ifndef CTXGCN_DATA_HPP
#define CTXGCN_DATA_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ctxgcn/baselines.hpp"
#include "ctxgcn/types.hpp"

namespace ctxgcn {

// frames[t][j] is the 3D position of joint j at frame t. Every frame must
// list the same joint count; all coordinates finite.
struct SkeletonSequence {
  std::string label;
  std::vector<std::vector<std::array<double, 3>>> frames;

  std::size_t frame_count() const { return frames.size(); }
  std::size_t joint_count() const { return frames.empty() ? 0 : frames.front().size(); }
};

// s x n descriptor with s = 3 * chunk_count: rows are ordered chunk-major,
// coordinate-minor (chunk 0 x, chunk 0 y, chunk 0 z, chunk 1 x, ...).
struct ChunkedDescriptor {
  Matrix u;
};

// Frame t lands in chunk floor(t * chunk_count / T); each cell holds the
// mean coordinate over its chunk's frames. Sequences shorter than
// chunk_count leave chunks empty; an empty chunk copies the nearest
// nonempty chunk's mean (earlier chunk on ties), which keeps s fixed
// without inventing zeros that would fake motion. The map depends only on
// relative position, so doubling the frame rate (each frame twice) leaves
// the descriptor unchanged whenever chunk_count divides T.
ChunkedDescriptor temporal_chunk(const SkeletonSequence& sequence, std::size_t chunk_count);

// JSONL, one record per line:
//   {"format": 1, "label": "...", "frames": [[[x,y,z], ...n], ...T]}
// Parse failures name the line. Doubles survive a save/load round trip
// bit-exactly.
std::vector<SkeletonSequence> load_sequences(const std::string& path);
void save_sequences(const std::string& path, const std::vector<SkeletonSequence>& sequences);

// Converter stub for SBU-style motion text: one line per frame, holding a
// frame index followed by 3 * joint_count comma-separated coordinates
// (joint-major: x, y, z per joint), with optional whitespace and an optional
// trailing comma. joint_count defaults to the two-person, 15-joints-each
// layout. Covers the documented text shape only; fetching the dataset is out
// of scope. Parse failures name the line.
SkeletonSequence convert_sbu_text(const std::string& text, const std::string& label,
                                  std::size_t joint_count = 30);

// Sorted unique labels; the class index of a label is its position here.
std::vector<std::string> class_names(const std::vector<SkeletonSequence>& sequences);
std::size_t class_index(const std::vector<std::string>& names, const std::string& label);

struct IndexSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Seeded shuffle, floor(count * fraction) samples to train. fraction must
// leave both sides nonempty.
IndexSplit split_by_fraction(std::size_t count, double fraction, std::uint64_t seed);

// {"format": 1, "train": [indices], "test": [indices]}; indices must be in
// range, unique, and disjoint across the two sides.
IndexSplit load_fold_file(const std::string& path, std::size_t count);

struct SynthesisConfig {
  std::size_t node_count = 12;
  std::size_t class_count = 2;
  std::size_t samples_per_class = 40;
  std::size_t frame_count = 16;
  double noise_std = 0.0;
  std::uint64_t hidden_adjacency_seed = 1;
  std::uint64_t seed = 1;
};

struct SynthesizedTask {
  std::vector<SkeletonSequence> train;  // ceil(0.7 * samples_per_class) per class
  std::vector<SkeletonSequence> test;
  SkeletonAdjacency nominal_skeleton;   // chain over node_count joints
  SkeletonAdjacency hidden_adjacency;   // the graph the labels actually follow
};

// Class-conditional sequences: a fixed carrier wave enters each node with a
// class-specific amplitude pattern obtained by propagating a seed pattern
// through the hidden adjacency. Classes come in orientation pairs (the same
// propagated pattern read in reversed node order), so aggregation along the
// chain skeleton, which commutes with the reversal, cannot tell paired
// classes apart, while the hidden structure can. Deterministic given seeds.
SynthesizedTask synthesize_task(const SynthesisConfig& config);

}  // namespace ctxgcn

#endif  // CTXGCN_DATA_HPP
