#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mcanet/data.hpp"
#include "mcanet/model.hpp"
#include "mcanet/training.hpp"

namespace mcanet {

// Everything a run needs. Keys are grouped by section: backbone., csra.,
// optim., data., run.
struct RunConfig {
  std::string preset = "tiny";
  BackboneConfig backbone = BackboneConfig::preset("tiny");
  HeadKind head_kind = HeadKind::kCsra;
  CsraHeadConfig head = CsraHeadConfig::with_heads(6, 2, 0.1);
  OptimConfig optim;

  std::string manifest;
  std::string boxes;
  double train_fraction = 0.8;
  bool augment_enabled = true;
  AugmentConfig augment;
  std::size_t synth_images = 250;
  double synth_presence = 0.5;

  std::uint64_t seed = 1;
  std::string out_dir = "run";
  std::string checkpoint;
  std::size_t prefetch = 2;
  double threshold = 0.5;

  ModelConfig model() const { return {backbone, head, head_kind}; }
  TrainerOptions trainer_options() const;
  void validate() const;
  // One "key = value" line per key, in a fixed order; parsing it back yields
  // the same configuration.
  std::string to_text() const;
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Splits "--section.key value" and "--section.key=value" arguments. Anything
// else is a UsageError.
Overrides parse_override_flags(std::span<const std::string> args);

// Defaults, then the "key = value" lines of `file_text` ('#' starts a
// comment), then `flags`. The backbone preset is applied before any other
// backbone key regardless of where it appears. UsageError names the key on an
// unknown key or an unparsable value.
RunConfig parse_config(const std::string& file_text, const Overrides& flags = {});

std::vector<std::string> config_keys();

}  // namespace mcanet
