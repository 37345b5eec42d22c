#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sen/tensor.hpp"

namespace sen {

struct EncoderConfig {
  std::string modality_name;
  int64_t input_dim = 8;
  int64_t seq_len = 8;   // raw tokens per sample
  int64_t depth = 2;     // transformer blocks
  int64_t heads = 2;
  int64_t shared_dim = 16;  // d, identical across modalities
  int64_t max_prompt_tokens = 8;
  int64_t mlp_ratio = 4;

  void validate(std::vector<std::string>& violations,
                const std::string& where) const;
  void validate_or_throw() const;
};

// One pre-norm transformer block. The same parameter bundle backs the frozen
// encoder blocks and the trainable transformer-fusion baseline.
struct TransformerBlockParams {
  Tensor ln1_gamma, ln1_beta;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gamma, ln2_beta;
  Tensor w1, b1, w2, b2;

  // resid_std applies to the projections that write into the residual
  // stream (wo, w2).
  static TransformerBlockParams init(int64_t dim, int64_t mlp_hidden, Rng& rng,
                                     double weight_std, double resid_std,
                                     bool trainable);
  std::vector<Tensor> tensors() const;
  int64_t parameter_count() const;
};

// x: [batch*tokens, dim], attention runs within each sample's tokens.
Tensor transformer_block_forward(const TransformerBlockParams& p,
                                 const Tensor& x, int64_t batch,
                                 int64_t tokens, int64_t heads);

// A frozen deterministic transformer encoder for one modality. Weights are a
// pure function of (config, seed); none of them ever receives gradients.
class SuperNeuron {
 public:
  SuperNeuron(EncoderConfig cfg, uint64_t seed);

  struct Encoded {
    Tensor token_feats;  // [(n+k) x d] per sample (batched: [B*(n+k), d])
    Tensor pooled;       // [d] per sample (batched: [B, d])
  };

  // Single-sample contract: tokens [seq_len, input_dim]; prompts, when given,
  // are prompt tokens [k, d] prepended after the embedding projection.
  Encoded encode(const Tensor& tokens, const Tensor* prompts = nullptr) const;

  // Batched path: tokens flattened [B*seq_len, input_dim]; prompts
  // [B*k, d] or null.
  Encoded encode_batch(const Tensor& tokens, int64_t batch,
                       const Tensor* prompts, int64_t prompt_tokens) const;

  // Embedding (projection + positions) of the raw tokens; constant per sample,
  // so callers may cache it across recursion rounds.
  Tensor embed_batch(const Tensor& tokens, int64_t batch) const;
  Encoded encode_embedded(const Tensor& embedded, int64_t batch,
                          const Tensor* prompts, int64_t prompt_tokens) const;

  const EncoderConfig& config() const { return cfg_; }
  uint64_t seed() const { return seed_; }
  std::vector<Tensor> parameters() const;
  int64_t parameter_count() const;
  void hash_parameters(class Sha256& h) const;
  std::string parameters_sha256() const;
  size_t encode_calls() const { return encode_calls_; }
  void reset_encode_calls() const { encode_calls_ = 0; }

 private:
  EncoderConfig cfg_;
  uint64_t seed_;
  Tensor embed_w_, embed_b_;
  Tensor pos_;  // [(seq_len + max_prompt_tokens), d]
  std::vector<TransformerBlockParams> blocks_;
  Tensor final_gamma_, final_beta_;
  mutable size_t encode_calls_ = 0;
};

inline SuperNeuron build_super_neuron(const EncoderConfig& cfg, uint64_t seed) {
  return SuperNeuron(cfg, seed);
}

}  // namespace sen
