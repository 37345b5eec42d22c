#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sen/tensor.hpp"

namespace sen {

enum class FusionKind { avg, add, concat, attention, moe };

FusionKind fusion_kind_from_string(const std::string& s);
std::string to_string(FusionKind k);

// Knowledge-integrating strategy. avg/add/concat carry no parameters;
// attention owns a learnable query plus key/value projections (initialized to
// identity maps with a zero query, so a fresh strategy is exactly the mean of
// its inputs and reduces to the single input at M=1); moe owns one scalar
// gate projection shared across modalities.
struct FusionStrategy {
  FusionKind kind = FusionKind::avg;
  int64_t dim = 0;
  Tensor query;   // [d]
  Tensor wk, wv;  // [d, d]
  Tensor gate;    // [d, 1]

  static FusionStrategy make(FusionKind kind, int64_t d);
  std::vector<Tensor> trainable() const;
  int64_t trainable_count() const;
  int64_t fused_dim(int64_t modalities) const;
};

// features: M tensors of shape [B, d] -> [B, fused_dim]
Tensor integrate(std::span<const Tensor> features,
                 const FusionStrategy& fusion);

// Two-layer distributor MLP H: fused -> hidden d (GELU) -> k*d. The output
// layer starts at zero so a fresh RA block emits zero neurotransmitters.
struct DistributorMlp {
  Tensor w1, b1, w2, b2;

  static DistributorMlp make(int64_t in_dim, int64_t hidden, int64_t out_dim,
                             Rng& rng);
  Tensor forward(const Tensor& fused) const;
  std::vector<Tensor> trainable() const;
  int64_t trainable_count() const;
};

// Per-layer trainable state of the Recursive Association block.
struct RABlockParams {
  int layer_index = 0;
  int64_t modalities = 0;
  int64_t dim = 0;            // d
  int64_t prompt_tokens = 0;  // k
  bool sparse = true;         // one distributor per modality vs one shared
  bool learnable_prompt = true;
  FusionStrategy fusion;
  std::vector<DistributorMlp> distributors;  // M entries (sparse) or 1 (dense)
  std::vector<Tensor> prompts;               // Q, one [k, d] per modality

  static RABlockParams make(int layer_index, int64_t modalities, int64_t d,
                            int64_t prompt_tokens, FusionKind fusion,
                            bool sparse, bool learnable_prompt, Rng& rng);
  std::vector<Tensor> trainable() const;
  std::vector<std::pair<std::string, Tensor>> named_trainable(
      const std::string& prefix) const;
  int64_t trainable_count() const;
};

// fused [B, fused_dim] -> M neurotransmitters [B, k*d]
std::vector<Tensor> distribute(const Tensor& fused, const RABlockParams& p);
// P = G + Q (broadcast over the batch); identity when prompts are disabled
std::vector<Tensor> prompt_compose(std::span<const Tensor> neurotransmitters,
                                   const RABlockParams& p);
// integrate -> distribute -> prompt_compose; empty result when k == 0
std::vector<Tensor> ra_forward(std::span<const Tensor> features,
                               const RABlockParams& p);

}  // namespace sen
