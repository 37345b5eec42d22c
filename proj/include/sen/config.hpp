#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sen/encoder.hpp"
#include "sen/network.hpp"
#include "sen/tasks.hpp"

namespace sen {

struct RaConfig {
  int64_t layers = 3;  // L
  FusionKind fusion = FusionKind::avg;
  bool sparse = true;  // distribution: sparse | dense
  int64_t prompt_tokens = 4;
  bool learnable_prompt = true;
  bool passes_l_plus_1 = true;  // passes_mode: l_plus_1 | l
};

struct TrainingRecipe {
  ArmKind arm = ArmKind::ra;
  double base_lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.1;
  int64_t steps = 2000;
  int64_t batch = 32;
  bool cosine_schedule = true;
  int64_t eval_interval = 200;
};

struct TaskConfig {
  TaskKind kind = TaskKind::parity;
  double noise = 0.1;
  int64_t train_samples = 4096;
  int64_t test_samples = 1024;
  // parity
  double pattern_scale = 0.35;
  // contrastive
  int64_t classes = 8;
  // injection
  int64_t latent_dim = 4;
  Shape target_shape = {4, 8};
  // model-side restriction: indices into `modalities` (empty = all)
  std::vector<int64_t> active_modalities;
};

// The full experiment description. A minimal (even empty) JSON document is
// valid: every field has the desk-scale default. Unknown keys are rejected,
// and validation reports every violation at once.
struct SENConfig {
  uint64_t seed = 1;
  int64_t shared_dim = 16;
  std::vector<EncoderConfig> modalities;  // defaults: video, text, depth
  RaConfig ra;
  TrainingRecipe training;
  TaskConfig task;

  SENConfig();  // desk-scale defaults

  static SENConfig from_json_text(const std::string& text);
  static SENConfig from_file(const std::string& path);
  std::string to_json_text() const;  // canonical form
  std::string digest() const;        // sha256 of the canonical form

  // Build inputs for the network honoring task.active_modalities.
  SenSpec build_spec() const;
  std::vector<int64_t> active_modalities() const;
  TaskData build_task() const;

  void validate(std::vector<std::string>& violations) const;
  void validate_or_throw() const;
};

}  // namespace sen
