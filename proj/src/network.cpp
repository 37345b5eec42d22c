#include "sen/network.hpp"

#include <cmath>

#include "sen/sha256.hpp"

namespace sen {

ArmKind arm_kind_from_string(const std::string& s) {
  if (s == "pure") return ArmKind::pure;
  if (s == "baseline") return ArmKind::baseline;
  if (s == "transformer") return ArmKind::transformer;
  if (s == "ra") return ArmKind::ra;
  throw ConfigError("unknown arm '" + s +
                    "' (expected pure|baseline|transformer|ra)");
}

std::string to_string(ArmKind a) {
  switch (a) {
    case ArmKind::pure: return "pure";
    case ArmKind::baseline: return "baseline";
    case ArmKind::transformer: return "transformer";
    case ArmKind::ra: return "ra";
  }
  return "?";
}

std::vector<Tensor> TransformerFusionLayer::trainable() const {
  std::vector<Tensor> out = block.tensors();
  out.push_back(proj_w);
  out.push_back(proj_b);
  return out;
}

std::vector<std::pair<std::string, Tensor>>
TransformerFusionLayer::named_trainable(const std::string& prefix) const {
  static const char* names[] = {"ln1_gamma", "ln1_beta", "wq", "bq",
                                "wk",        "bk",       "wv", "bv",
                                "wo",        "bo",       "ln2_gamma",
                                "ln2_beta",  "w1",       "b1", "w2", "b2"};
  std::vector<std::pair<std::string, Tensor>> out;
  auto t = block.tensors();
  for (size_t i = 0; i < t.size(); ++i)
    out.emplace_back(prefix + ".block." + names[i], t[i]);
  out.emplace_back(prefix + ".proj.w", proj_w);
  out.emplace_back(prefix + ".proj.b", proj_b);
  return out;
}

int64_t TransformerFusionLayer::trainable_count() const {
  return block.parameter_count() + proj_w.numel() + proj_b.numel();
}

namespace {
constexpr uint64_t kEncoderStream = 0x100;
constexpr uint64_t kRaStream = 0x200;
constexpr uint64_t kBaselineStream = 0x300;
constexpr uint64_t kTransformerStream = 0x400;
}  // namespace

SEN::SEN(SenSpec spec, uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
  if (spec_.encoders.empty())
    throw ConfigError("sen: at least one modality encoder required");
  if (spec_.ra_layers < 0) throw ConfigError("sen: ra_layers must be >= 0");
  if (spec_.prompt_tokens < 0)
    throw ConfigError("sen: prompt_tokens must be >= 0");
  dim_ = spec_.encoders[0].shared_dim;
  for (const auto& e : spec_.encoders) {
    if (e.shared_dim != dim_)
      throw ConfigError("sen: all modalities must share dim " +
                        std::to_string(dim_) + "; '" + e.modality_name +
                        "' has " + std::to_string(e.shared_dim));
    if (spec_.prompt_tokens > e.max_prompt_tokens)
      throw ConfigError("sen: prompt_tokens " +
                        std::to_string(spec_.prompt_tokens) +
                        " exceeds max_prompt_tokens of '" + e.modality_name +
                        "' (" + std::to_string(e.max_prompt_tokens) + ")");
  }
  if (!spec_.encoder_seeds.empty() &&
      spec_.encoder_seeds.size() != spec_.encoders.size())
    throw ConfigError("sen: encoder_seeds must match encoder count");

  const int64_t m_count = int64_t(spec_.encoders.size());
  if (spec_.encoder_seeds.empty()) {
    for (int64_t m = 0; m < m_count; ++m)
      spec_.encoder_seeds.push_back(
          derive_seed(seed_, kEncoderStream + uint64_t(m)));
  }
  for (int64_t m = 0; m < m_count; ++m)
    neurons_.push_back(std::make_unique<SuperNeuron>(
        spec_.encoders[size_t(m)], spec_.encoder_seeds[size_t(m)]));

  rounds_ = spec_.passes_l_plus_1 ? spec_.ra_layers
                                  : std::max<int64_t>(spec_.ra_layers - 1, 0);

  for (int64_t i = 0; i < rounds_; ++i) {
    Rng rng(derive_seed(seed_, kRaStream + uint64_t(i)));
    ra_layers_.push_back(RABlockParams::make(
        int(i), m_count, dim_, spec_.prompt_tokens, spec_.fusion, spec_.sparse,
        spec_.learnable_prompt, rng));
  }

  const int64_t k = spec_.prompt_tokens;
  if (k > 0) {
    Rng rng(derive_seed(seed_, kBaselineStream));
    const int64_t in_dim = m_count * dim_;
    baseline_w_ =
        Tensor::randn({in_dim, k * dim_}, rng, 1.0 / std::sqrt(double(in_dim)),
                      false);
    baseline_b_ = Tensor::zeros({k * dim_}, false);

    for (int64_t i = 0; i < rounds_; ++i) {
      Rng trng(derive_seed(seed_, kTransformerStream + uint64_t(i)));
      TransformerFusionLayer layer;
      layer.block = TransformerBlockParams::init(
          dim_, spec_.encoders[0].mlp_ratio * dim_, trng, 0.02, 0.02, true);
      layer.proj_w = Tensor::zeros({m_count * dim_, m_count * k * dim_}, true);
      layer.proj_b = Tensor::zeros({m_count * k * dim_}, true);
      tf_layers_.push_back(std::move(layer));
    }
  }
}

std::vector<Tensor> SEN::embed_all(std::span<const Tensor> inputs,
                                   int64_t batch) const {
  if (int64_t(inputs.size()) != modalities())
    throw ShapeError("sen: expected " + std::to_string(modalities()) +
                     " modality inputs, got " + std::to_string(inputs.size()));
  std::vector<Tensor> out;
  out.reserve(inputs.size());
  for (int64_t m = 0; m < modalities(); ++m)
    out.push_back(neurons_[size_t(m)]->embed_batch(inputs[size_t(m)], batch));
  return out;
}

std::vector<Tensor> SEN::pass1_pooled(std::span<const Tensor> embedded,
                                      int64_t batch) const {
  std::vector<Tensor> out;
  out.reserve(embedded.size());
  for (int64_t m = 0; m < modalities(); ++m)
    out.push_back(neurons_[size_t(m)]
                      ->encode_embedded(embedded[size_t(m)], batch, nullptr, 0)
                      .pooled);
  return out;
}

SEN::ForwardResult SEN::finish(std::vector<Tensor> finals,
                               int64_t batch) const {
  std::vector<Tensor> stacked;
  stacked.reserve(finals.size());
  for (const Tensor& f : finals)
    stacked.push_back(reshape(f, {batch, 1, dim_}));
  Tensor context = reduce_mean(concat(stacked, 1), 1);
  return {std::move(finals), std::move(context)};
}

SEN::ForwardResult SEN::run_rounds(std::span<const Tensor> embedded,
                                   std::span<const Tensor> pass1,
                                   int64_t batch, int64_t rounds,
                                   ArmKind arm) const {
  const int64_t k = spec_.prompt_tokens;
  std::vector<Tensor> feats(pass1.begin(), pass1.end());
  if (k == 0 || arm == ArmKind::pure) return finish(std::move(feats), batch);

  for (int64_t r = 0; r < rounds; ++r) {
    std::vector<Tensor> prompts;  // per modality [B, k*d]
    switch (arm) {
      case ArmKind::ra:
        prompts = ra_forward(feats, ra_layers_[size_t(r)]);
        break;
      case ArmKind::baseline: {
        Tensor cat = concat(feats, 1);  // [B, M*d]
        Tensor pr = linear(cat, baseline_w_, baseline_b_);
        prompts.assign(static_cast<size_t>(modalities()), pr);
        break;
      }
      case ArmKind::transformer: {
        const TransformerFusionLayer& layer = tf_layers_[size_t(r)];
        std::vector<Tensor> rows;
        rows.reserve(feats.size());
        for (const Tensor& f : feats)
          rows.push_back(reshape(f, {batch, 1, dim_}));
        Tensor seq = reshape(concat(rows, 1), {batch * modalities(), dim_});
        Tensor processed = transformer_block_forward(
            layer.block, seq, batch, modalities(), spec_.encoders[0].heads);
        Tensor cat = reshape(processed, {batch, modalities() * dim_});
        Tensor all_prompts = linear(cat, layer.proj_w, layer.proj_b);
        for (int64_t m = 0; m < modalities(); ++m)
          prompts.push_back(slice(all_prompts, 1, m * k * dim_, k * dim_));
        break;
      }
      case ArmKind::pure:
        break;
    }
    for (int64_t m = 0; m < modalities(); ++m) {
      Tensor p = reshape(prompts[size_t(m)], {batch * k, dim_});
      feats[size_t(m)] = neurons_[size_t(m)]
                             ->encode_embedded(embedded[size_t(m)], batch, &p, k)
                             .pooled;
    }
  }
  return finish(std::move(feats), batch);
}

SEN::ForwardResult SEN::forward(std::span<const Tensor> inputs,
                                int64_t batch) const {
  std::vector<Tensor> embedded = embed_all(inputs, batch);
  std::vector<Tensor> pass1 = pass1_pooled(embedded, batch);
  return run_rounds(embedded, pass1, batch, rounds_, spec_.arm);
}

SEN::ForwardResult SEN::sen_forward(std::span<const Tensor> inputs,
                                    int64_t batch) const {
  return sen_forward_rounds(inputs, batch, rounds_);
}

SEN::ForwardResult SEN::sen_forward_rounds(std::span<const Tensor> inputs,
                                           int64_t batch,
                                           int64_t rounds) const {
  if (rounds < 0 || rounds > rounds_)
    throw ShapeError("sen_forward: rounds " + std::to_string(rounds) +
                     " out of range [0, " + std::to_string(rounds_) + "]");
  std::vector<Tensor> embedded = embed_all(inputs, batch);
  std::vector<Tensor> pass1 = pass1_pooled(embedded, batch);
  return run_rounds(embedded, pass1, batch, rounds, ArmKind::ra);
}

SEN::ForwardResult SEN::baseline_forward(std::span<const Tensor> inputs,
                                         int64_t batch) const {
  std::vector<Tensor> embedded = embed_all(inputs, batch);
  std::vector<Tensor> pass1 = pass1_pooled(embedded, batch);
  return run_rounds(embedded, pass1, batch, rounds_, ArmKind::baseline);
}

SEN::ForwardResult SEN::transformer_baseline_forward(
    std::span<const Tensor> inputs, int64_t batch) const {
  std::vector<Tensor> embedded = embed_all(inputs, batch);
  std::vector<Tensor> pass1 = pass1_pooled(embedded, batch);
  return run_rounds(embedded, pass1, batch, rounds_, ArmKind::transformer);
}

SEN::ForwardResult SEN::forward_from_cache(std::span<const Tensor> embedded,
                                           std::span<const Tensor> pass1,
                                           int64_t batch) const {
  return run_rounds(embedded, pass1, batch, rounds_, spec_.arm);
}

std::vector<Tensor> SEN::trainable_parameters() const {
  std::vector<Tensor> out;
  if (spec_.arm == ArmKind::ra) {
    for (const auto& layer : ra_layers_) {
      auto t = layer.trainable();
      out.insert(out.end(), t.begin(), t.end());
    }
  } else if (spec_.arm == ArmKind::transformer) {
    for (const auto& layer : tf_layers_) {
      auto t = layer.trainable();
      out.insert(out.end(), t.begin(), t.end());
    }
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> SEN::named_trainables() const {
  std::vector<std::pair<std::string, Tensor>> out;
  if (spec_.arm == ArmKind::ra) {
    for (size_t i = 0; i < ra_layers_.size(); ++i) {
      auto named = ra_layers_[i].named_trainable("ra." + std::to_string(i));
      out.insert(out.end(), named.begin(), named.end());
    }
  } else if (spec_.arm == ArmKind::transformer) {
    for (size_t i = 0; i < tf_layers_.size(); ++i) {
      auto named = tf_layers_[i].named_trainable("tf." + std::to_string(i));
      out.insert(out.end(), named.begin(), named.end());
    }
  }
  return out;
}

std::pair<int64_t, int64_t> SEN::count_parameters() const {
  int64_t frozen = 0;
  for (const auto& n : neurons_) frozen += n->parameter_count();
  if (spec_.arm == ArmKind::baseline && baseline_w_.defined())
    frozen += baseline_w_.numel() + baseline_b_.numel();
  int64_t trainable = 0;
  for (const Tensor& t : trainable_parameters()) trainable += t.numel();
  return {frozen, trainable};
}

std::string SEN::encoders_sha256() const {
  Sha256 h;
  for (const auto& n : neurons_) n->hash_parameters(h);
  return h.hex_digest();
}

size_t SEN::total_encode_calls() const {
  size_t n = 0;
  for (const auto& neuron : neurons_) n += neuron->encode_calls();
  return n;
}

void SEN::reset_encode_calls() const {
  for (const auto& neuron : neurons_) neuron->reset_encode_calls();
}

}  // namespace sen
