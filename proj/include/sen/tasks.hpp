#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sen/adapters.hpp"
#include "sen/tensor.hpp"

namespace sen {

enum class TaskKind { parity, contrastive, injection };

TaskKind task_kind_from_string(const std::string& s);
std::string to_string(TaskKind k);

// A fully materialized synthetic dataset. Regenerating with the same
// arguments yields identical bytes.
struct TaskData {
  TaskKind kind = TaskKind::parity;
  int64_t modalities = 0;
  int64_t seq_len = 0;
  int64_t input_dim = 0;
  uint64_t seed = 0;

  // per modality: [N*seq_len, input_dim]
  std::vector<Tensor> train_inputs, test_inputs;
  // parity/contrastive
  std::vector<int> train_labels, test_labels;
  // injection: [N, target_size]
  Tensor train_targets, test_targets;
  Shape target_shape;
  // contrastive
  ClassEmbeddings classes;
  int64_t num_classes = 0;

  int64_t train_size() const { return int64_t(train_labels.size()); }
  int64_t test_size() const { return int64_t(test_labels.size()); }
  std::string sha256() const;
};

struct ParityTaskSpec {
  int64_t modalities = 3;
  int64_t input_dim = 8;
  int64_t seq_len = 8;
  double noise = 0.1;
  double pattern_scale = 0.35;  // norm of the two bit patterns
  int64_t train_samples = 4096;
  int64_t test_samples = 1024;
};

// Hidden bits b_1..b_M, one per modality; modality m's tokens carry one of
// two fixed orthogonal pattern vectors for b_m plus Gaussian noise; the label
// is the XOR of all bits. A linear readout of per-modality features cannot
// express the label; cross-modal interaction can.
TaskData gen_parity_task(const ParityTaskSpec& spec, uint64_t seed);

struct ContrastiveTaskSpec {
  int64_t classes = 8;
  int64_t dim = 16;  // class-embedding width == shared_dim
  int64_t seq_len = 8;
  double noise = 0.1;
  int64_t train_samples = 4096;
  int64_t test_samples = 1024;
  int64_t modalities = 3;  // video, text, audio streams
};

// Orthonormal class embeddings; per sample each modality observes the class
// embedding plus independent noise, replicated across tokens.
TaskData gen_contrastive_task(const ContrastiveTaskSpec& spec, uint64_t seed);

struct InjectionTaskSpec {
  int64_t modalities = 3;
  int64_t input_dim = 8;
  int64_t seq_len = 8;
  int64_t latent_dim = 4;
  Shape target_shape = {4, 8};
  double noise = 0.1;
  int64_t train_samples = 4096;
  int64_t test_samples = 1024;
};

// Per-modality latents z_m; the target is a fixed linear map of their
// elementwise product, so it is recoverable only from combined modalities.
TaskData gen_injection_task(const InjectionTaskSpec& spec, uint64_t seed);

}  // namespace sen
