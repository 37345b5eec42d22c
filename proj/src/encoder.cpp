#include "sen/encoder.hpp"

#include <cmath>

#include "sen/sha256.hpp"

namespace sen {

void EncoderConfig::validate(std::vector<std::string>& violations,
                             const std::string& where) const {
  if (input_dim < 1)
    violations.push_back(where + ": input_dim must be >= 1");
  if (seq_len < 1) violations.push_back(where + ": seq_len must be >= 1");
  if (depth < 1) violations.push_back(where + ": depth must be >= 1");
  if (heads < 1) violations.push_back(where + ": heads must be >= 1");
  if (shared_dim < 1)
    violations.push_back(where + ": shared_dim must be >= 1");
  else if (heads >= 1 && shared_dim % heads != 0)
    violations.push_back(where + ": heads (" + std::to_string(heads) +
                         ") must divide shared_dim (" +
                         std::to_string(shared_dim) + ")");
  if (max_prompt_tokens < 0)
    violations.push_back(where + ": max_prompt_tokens must be >= 0");
  if (mlp_ratio < 1) violations.push_back(where + ": mlp_ratio must be >= 1");
}

void EncoderConfig::validate_or_throw() const {
  std::vector<std::string> v;
  validate(v, modality_name.empty() ? "encoder" : modality_name);
  if (!v.empty()) {
    std::string msg = "invalid encoder config:";
    for (const auto& s : v) msg += "\n  - " + s;
    throw ConfigError(msg);
  }
}

TransformerBlockParams TransformerBlockParams::init(int64_t dim,
                                                    int64_t mlp_hidden,
                                                    Rng& rng, double weight_std,
                                                    double resid_std,
                                                    bool trainable) {
  TransformerBlockParams p;
  p.ln1_gamma = Tensor::full({dim}, 1.0, trainable);
  p.ln1_beta = Tensor::zeros({dim}, trainable);
  p.wq = Tensor::randn({dim, dim}, rng, weight_std, trainable);
  p.bq = Tensor::zeros({dim}, trainable);
  p.wk = Tensor::randn({dim, dim}, rng, weight_std, trainable);
  p.bk = Tensor::zeros({dim}, trainable);
  p.wv = Tensor::randn({dim, dim}, rng, weight_std, trainable);
  p.bv = Tensor::zeros({dim}, trainable);
  p.wo = Tensor::randn({dim, dim}, rng, resid_std, trainable);
  p.bo = Tensor::zeros({dim}, trainable);
  p.ln2_gamma = Tensor::full({dim}, 1.0, trainable);
  p.ln2_beta = Tensor::zeros({dim}, trainable);
  p.w1 = Tensor::randn({dim, mlp_hidden}, rng, weight_std, trainable);
  p.b1 = Tensor::zeros({mlp_hidden}, trainable);
  p.w2 = Tensor::randn({mlp_hidden, dim}, rng, resid_std, trainable);
  p.b2 = Tensor::zeros({dim}, trainable);
  return p;
}

std::vector<Tensor> TransformerBlockParams::tensors() const {
  return {ln1_gamma, ln1_beta, wq, bq, wk, bk, wv, bv,
          wo,        bo,       ln2_gamma, ln2_beta, w1, b1, w2, b2};
}

int64_t TransformerBlockParams::parameter_count() const {
  int64_t n = 0;
  for (const Tensor& t : tensors()) n += t.numel();
  return n;
}

Tensor transformer_block_forward(const TransformerBlockParams& p,
                                 const Tensor& x, int64_t batch,
                                 int64_t tokens, int64_t heads) {
  const int64_t dim = x.dim(1);
  const int64_t dh = dim / heads;
  const double att_scale = 1.0 / std::sqrt(double(dh));

  // attention sub-block, pre-norm
  Tensor h = layer_norm(x, p.ln1_gamma, p.ln1_beta);
  Tensor q = linear(h, p.wq, p.bq);
  Tensor k = linear(h, p.wk, p.bk);
  Tensor v = linear(h, p.wv, p.bv);
  Tensor qh = split_heads(q, batch, tokens, heads);
  Tensor kh = split_heads(k, batch, tokens, heads);
  Tensor vh = split_heads(v, batch, tokens, heads);
  Tensor scores = scale(batched_matmul(qh, kh, false, true), att_scale);
  Tensor weights = softmax(scores, 2);
  Tensor ctx = merge_heads(batched_matmul(weights, vh), batch, tokens, heads);
  Tensor attn_out = linear(ctx, p.wo, p.bo);
  Tensor x1 = add(x, attn_out);

  // MLP sub-block
  Tensor h2 = layer_norm(x1, p.ln2_gamma, p.ln2_beta);
  Tensor m1 = gelu(linear(h2, p.w1, p.b1));
  Tensor m2 = linear(m1, p.w2, p.b2);
  return add(x1, m2);
}

SuperNeuron::SuperNeuron(EncoderConfig cfg, uint64_t seed)
    : cfg_(std::move(cfg)), seed_(seed) {
  cfg_.validate_or_throw();
  Rng rng(seed_);
  const int64_t d = cfg_.shared_dim;
  const double std = 0.02;
  const double resid_std = std / std::sqrt(double(cfg_.depth));
  embed_w_ = Tensor::randn({cfg_.input_dim, d}, rng, std, false);
  embed_b_ = Tensor::zeros({d}, false);
  pos_ = Tensor::randn({cfg_.seq_len + cfg_.max_prompt_tokens, d}, rng, std,
                       false);
  blocks_.reserve(static_cast<size_t>(cfg_.depth));
  for (int64_t i = 0; i < cfg_.depth; ++i) {
    blocks_.push_back(TransformerBlockParams::init(d, cfg_.mlp_ratio * d, rng,
                                                   std, resid_std, false));
  }
  final_gamma_ = Tensor::full({d}, 1.0, false);
  final_beta_ = Tensor::zeros({d}, false);
}

Tensor SuperNeuron::embed_batch(const Tensor& tokens, int64_t batch) const {
  const int64_t n = cfg_.seq_len;
  if (tokens.rank() != 2 || tokens.dim(0) != batch * n ||
      tokens.dim(1) != cfg_.input_dim)
    throw ShapeError("encode: tokens " + shape_str(tokens.shape()) +
                     " do not match batch " + std::to_string(batch) +
                     " x seq_len " + std::to_string(n) + " x input_dim " +
                     std::to_string(cfg_.input_dim));
  const int64_t d = cfg_.shared_dim;
  Tensor emb = linear(tokens, embed_w_, embed_b_);
  // token i uses positional row i; prompt rows live at seq_len + j
  Tensor tok_pos = slice(pos_, 0, 0, n);
  Tensor emb_rows = reshape(emb, {batch, n * d});
  Tensor pos_flat = reshape(tok_pos, {n * d});
  return reshape(broadcast_add(emb_rows, pos_flat), {batch * n, d});
}

SuperNeuron::Encoded SuperNeuron::encode_embedded(const Tensor& embedded,
                                                  int64_t batch,
                                                  const Tensor* prompts,
                                                  int64_t prompt_tokens) const {
  ++encode_calls_;
  const int64_t n = cfg_.seq_len;
  const int64_t d = cfg_.shared_dim;
  const int64_t k = (prompts && prompts->defined()) ? prompt_tokens : 0;
  if (embedded.rank() != 2 || embedded.dim(0) != batch * n ||
      embedded.dim(1) != d)
    throw ShapeError("encode: embedded tokens " +
                     shape_str(embedded.shape()) + " do not match batch " +
                     std::to_string(batch) + " x seq_len " +
                     std::to_string(n) + " x d " + std::to_string(d));

  Tensor seq;
  int64_t tokens_total = n;
  if (k > 0) {
    if (k > cfg_.max_prompt_tokens)
      throw ShapeError("encode: " + std::to_string(k) +
                       " prompt tokens exceed max_prompt_tokens " +
                       std::to_string(cfg_.max_prompt_tokens));
    if (prompts->rank() != 2 || prompts->dim(0) != batch * k ||
        prompts->dim(1) != d)
      throw ShapeError("encode: prompts " + shape_str(prompts->shape()) +
                       " do not match batch " + std::to_string(batch) + " x " +
                       std::to_string(k) + " x d " + std::to_string(d));
    Tensor prompt_pos = slice(pos_, 0, n, k);
    Tensor pr_rows = reshape(*prompts, {batch, k * d});
    Tensor pr = reshape(broadcast_add(pr_rows, reshape(prompt_pos, {k * d})),
                        {batch, k, d});
    Tensor tk = reshape(embedded, {batch, n, d});
    seq = reshape(concat({pr, tk}, 1), {batch * (n + k), d});
    tokens_total = n + k;
  } else {
    seq = embedded;
  }

  for (const auto& block : blocks_)
    seq = transformer_block_forward(block, seq, batch, tokens_total,
                                    cfg_.heads);
  Tensor feats = layer_norm(seq, final_gamma_, final_beta_);
  Tensor pooled =
      reduce_mean(reshape(feats, {batch, tokens_total, d}), 1);  // [B, d]
  return {feats, pooled};
}

SuperNeuron::Encoded SuperNeuron::encode_batch(const Tensor& tokens,
                                               int64_t batch,
                                               const Tensor* prompts,
                                               int64_t prompt_tokens) const {
  return encode_embedded(embed_batch(tokens, batch), batch, prompts,
                         prompt_tokens);
}

SuperNeuron::Encoded SuperNeuron::encode(const Tensor& tokens,
                                         const Tensor* prompts) const {
  int64_t k = 0;
  if (prompts && prompts->defined()) {
    if (prompts->rank() != 2 || prompts->dim(1) != cfg_.shared_dim)
      throw ShapeError("encode: prompts " + shape_str(prompts->shape()) +
                       " must be [k, " + std::to_string(cfg_.shared_dim) + "]");
    k = prompts->dim(0);
  }
  Encoded out = encode_batch(tokens, 1, prompts, k);
  out.pooled = reshape(out.pooled, {cfg_.shared_dim});
  return out;
}

std::vector<Tensor> SuperNeuron::parameters() const {
  std::vector<Tensor> out = {embed_w_, embed_b_, pos_};
  for (const auto& b : blocks_) {
    auto t = b.tensors();
    out.insert(out.end(), t.begin(), t.end());
  }
  out.push_back(final_gamma_);
  out.push_back(final_beta_);
  return out;
}

int64_t SuperNeuron::parameter_count() const {
  int64_t n = 0;
  for (const Tensor& t : parameters()) n += t.numel();
  return n;
}

void SuperNeuron::hash_parameters(Sha256& h) const {
  for (const Tensor& t : parameters()) h.update(t.values());
}

std::string SuperNeuron::parameters_sha256() const {
  Sha256 h;
  hash_parameters(h);
  return h.hex_digest();
}

}  // namespace sen
