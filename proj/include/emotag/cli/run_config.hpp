// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a sectioned key-value file (INI syntax) plus
// command-line overrides, which take precedence over the file.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "emotag/artifact_io.hpp"
#include "emotag/augment.hpp"
#include "emotag/netcore/params.hpp"
#include "emotag/trainer.hpp"

namespace emotag {

struct RunPaths {
  // Either one corpus split by seed, or three pre-split files.
  std::filesystem::path corpus;
  std::filesystem::path train, val, test;
  std::filesystem::path embeddings;  // optional; seeded random vectors otherwise
  std::filesystem::path labels;      // optional; the 28 GoEmotions names otherwise
  std::filesystem::path weak_samples, votes;  // optional weak-label augmentation
  std::filesystem::path output_dir;
};

struct EvalSettings {
  double grid_step = 0.05;
  int top_k = 4;
};

struct AugmentSettings {
  double weak_cutoff = 0.5;
  double alignment_threshold = 0.7;
};

struct RunConfig {
  std::uint64_t seed = 0;
  RunPaths paths;
  ModelConfig model;
  TrainingConfig training;
  BalanceConfig balance;
  bool balance_enabled = true;
  EvalSettings eval;
  AugmentSettings augment;

  /// Relative paths are resolved against the directory of `path`.
  static RunConfig load(const std::filesystem::path& path);
  static RunConfig parse(std::string_view content, const std::filesystem::path& base_dir = {});

  /// Stable `section.key=value` rendering of every effective setting.
  std::string canonical() const;
  std::string hash() const { return fnv1a_hex(canonical()); }
  ArtifactHeader header(std::string kind) const;

  std::vector<double> threshold_grid() const;
  LabelVocabulary vocabulary() const;
};

struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  std::optional<int> max_epochs;
  std::optional<int> batch_size;
  std::optional<std::string> precision;
  bool no_attention = false;
};

void apply_overrides(RunConfig& cfg, const ConfigOverrides& o);

Precision parse_precision(std::string_view s);

}  // namespace emotag
