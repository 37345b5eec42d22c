#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sen/encoder.hpp"
#include "sen/ra_block.hpp"

namespace sen {

// Which path carries multi-modal information between encoder passes.
//   pure        — single frozen pass, no prompts at all
//   baseline    — frozen seeded projection of concatenated latents as prompts
//   transformer — trainable transformer block over latents + down-projection
//   ra          — the Recursive Association block
enum class ArmKind { pure, baseline, transformer, ra };

ArmKind arm_kind_from_string(const std::string& s);
std::string to_string(ArmKind a);

struct SenSpec {
  std::vector<EncoderConfig> encoders;
  std::vector<uint64_t> encoder_seeds;  // optional; derived from seed if empty
  int64_t ra_layers = 3;                // L
  FusionKind fusion = FusionKind::avg;
  bool sparse = true;
  int64_t prompt_tokens = 4;  // k
  bool learnable_prompt = true;
  bool passes_l_plus_1 = true;  // L RA rounds between L+1 passes
  ArmKind arm = ArmKind::ra;
};

// Trainable replacement of the RA block used by the fusion-format ablation:
// the M pooled latents run through a shared transformer block as an M-token
// sequence, then one linear map produces all modalities' prompts.
struct TransformerFusionLayer {
  TransformerBlockParams block;
  Tensor proj_w, proj_b;  // [M*d, M*k*d], zero-init

  std::vector<Tensor> trainable() const;
  std::vector<std::pair<std::string, Tensor>> named_trainable(
      const std::string& prefix) const;
  int64_t trainable_count() const;
};

class SEN {
 public:
  SEN(SenSpec spec, uint64_t seed);

  struct ForwardResult {
    std::vector<Tensor> finals;  // M tensors [B, d]
    Tensor context;              // [B, d], modality mean
  };

  // Inputs: one tensor per modality, flattened [B*seq_len_m, input_dim_m].
  ForwardResult forward(std::span<const Tensor> inputs, int64_t batch) const;
  ForwardResult sen_forward(std::span<const Tensor> inputs,
                            int64_t batch) const;
  // Probe hook: run only the first `rounds` RA rounds.
  ForwardResult sen_forward_rounds(std::span<const Tensor> inputs,
                                   int64_t batch, int64_t rounds) const;
  ForwardResult baseline_forward(std::span<const Tensor> inputs,
                                 int64_t batch) const;
  ForwardResult transformer_baseline_forward(std::span<const Tensor> inputs,
                                             int64_t batch) const;

  // Cached fast path: raw-token embeddings and first-pass pooled latents are
  // constant during training, so trainers compute them once per dataset.
  std::vector<Tensor> embed_all(std::span<const Tensor> inputs,
                                int64_t batch) const;
  std::vector<Tensor> pass1_pooled(std::span<const Tensor> embedded,
                                   int64_t batch) const;
  ForwardResult forward_from_cache(std::span<const Tensor> embedded,
                                   std::span<const Tensor> pass1,
                                   int64_t batch) const;

  int64_t modalities() const { return int64_t(neurons_.size()); }
  int64_t shared_dim() const { return dim_; }
  int64_t rounds() const { return rounds_; }
  ArmKind arm() const { return spec_.arm; }
  const SenSpec& spec() const { return spec_; }
  uint64_t seed() const { return seed_; }
  const SuperNeuron& neuron(int64_t m) const { return *neurons_[size_t(m)]; }
  const std::vector<RABlockParams>& ra_layers() const { return ra_layers_; }
  const std::vector<TransformerFusionLayer>& tf_layers() const {
    return tf_layers_;
  }

  // Exactly the active arm's trainable tensors; never any encoder tensor.
  std::vector<Tensor> trainable_parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_trainables() const;
  // (frozen, trainable) for the active arm
  std::pair<int64_t, int64_t> count_parameters() const;
  std::string encoders_sha256() const;
  size_t total_encode_calls() const;
  void reset_encode_calls() const;

 private:
  ForwardResult run_rounds(std::span<const Tensor> embedded,
                           std::span<const Tensor> pass1, int64_t batch,
                           int64_t rounds, ArmKind arm) const;
  ForwardResult finish(std::vector<Tensor> finals, int64_t batch) const;

  SenSpec spec_;
  uint64_t seed_;
  int64_t dim_ = 0;
  int64_t rounds_ = 0;
  std::vector<std::unique_ptr<SuperNeuron>> neurons_;
  std::vector<RABlockParams> ra_layers_;
  Tensor baseline_w_, baseline_b_;  // frozen
  std::vector<TransformerFusionLayer> tf_layers_;
};

}  // namespace sen
