#include "sen/ra_block.hpp"

#include <cmath>

namespace sen {

FusionKind fusion_kind_from_string(const std::string& s) {
  if (s == "avg") return FusionKind::avg;
  if (s == "add") return FusionKind::add;
  if (s == "concat") return FusionKind::concat;
  if (s == "attention") return FusionKind::attention;
  if (s == "moe") return FusionKind::moe;
  throw ConfigError("unknown fusion kind '" + s +
                    "' (expected avg|add|concat|attention|moe)");
}

std::string to_string(FusionKind k) {
  switch (k) {
    case FusionKind::avg: return "avg";
    case FusionKind::add: return "add";
    case FusionKind::concat: return "concat";
    case FusionKind::attention: return "attention";
    case FusionKind::moe: return "moe";
  }
  return "?";
}

FusionStrategy FusionStrategy::make(FusionKind kind, int64_t d) {
  FusionStrategy f;
  f.kind = kind;
  f.dim = d;
  if (kind == FusionKind::attention) {
    f.query = Tensor::zeros({d}, true);
    f.wk = Tensor::identity(d, true);
    f.wv = Tensor::identity(d, true);
  } else if (kind == FusionKind::moe) {
    f.gate = Tensor::zeros({d, 1}, true);
  }
  return f;
}

std::vector<Tensor> FusionStrategy::trainable() const {
  switch (kind) {
    case FusionKind::attention: return {query, wk, wv};
    case FusionKind::moe: return {gate};
    default: return {};
  }
}

int64_t FusionStrategy::trainable_count() const {
  int64_t n = 0;
  for (const Tensor& t : trainable()) n += t.numel();
  return n;
}

int64_t FusionStrategy::fused_dim(int64_t modalities) const {
  return kind == FusionKind::concat ? modalities * dim : dim;
}

Tensor integrate(std::span<const Tensor> features,
                 const FusionStrategy& fusion) {
  if (features.empty()) throw ShapeError("integrate: no modality features");
  const int64_t d = fusion.dim;
  for (const Tensor& f : features) {
    if (!f.defined() || f.rank() != 2 || f.dim(1) != d)
      throw ShapeError("integrate: feature " +
                       (f.defined() ? shape_str(f.shape()) : "<undefined>") +
                       " must be [B, " + std::to_string(d) + "]");
    if (f.dim(0) != features[0].dim(0))
      throw ShapeError("integrate: batch mismatch " +
                       shape_str(features[0].shape()) + " vs " +
                       shape_str(f.shape()));
  }
  const int64_t m = int64_t(features.size());
  switch (fusion.kind) {
    case FusionKind::add:
    case FusionKind::avg: {
      Tensor acc = features[0];
      for (int64_t i = 1; i < m; ++i) acc = add(acc, features[size_t(i)]);
      if (fusion.kind == FusionKind::avg) acc = divide(acc, double(m));
      return acc;
    }
    case FusionKind::concat:
      return concat(features, 1);
    case FusionKind::attention: {
      // weights over modalities from <q, K f_m>/sqrt(d), applied to V f_m
      std::vector<Tensor> scores;
      std::vector<Tensor> values;
      scores.reserve(static_cast<size_t>(m));
      values.reserve(static_cast<size_t>(m));
      Tensor q_col = reshape(fusion.query, {d, 1});
      for (const Tensor& f : features) {
        scores.push_back(matmul(matmul(f, fusion.wk), q_col));  // [B, 1]
        values.push_back(matmul(f, fusion.wv));
      }
      Tensor w = softmax(scale(concat(scores, 1), 1.0 / std::sqrt(double(d))),
                         1);  // [B, M]
      Tensor out;
      for (int64_t i = 0; i < m; ++i) {
        Tensor term = row_scale(values[size_t(i)], slice(w, 1, i, 1));
        out = i == 0 ? term : add(out, term);
      }
      return out;
    }
    case FusionKind::moe: {
      std::vector<Tensor> scores;
      scores.reserve(static_cast<size_t>(m));
      for (const Tensor& f : features)
        scores.push_back(matmul(f, fusion.gate));  // [B, 1]
      Tensor w = softmax(concat(scores, 1), 1);
      Tensor out;
      for (int64_t i = 0; i < m; ++i) {
        Tensor term = row_scale(features[size_t(i)], slice(w, 1, i, 1));
        out = i == 0 ? term : add(out, term);
      }
      return out;
    }
  }
  throw ShapeError("integrate: unknown fusion kind");
}

DistributorMlp DistributorMlp::make(int64_t in_dim, int64_t hidden,
                                    int64_t out_dim, Rng& rng) {
  DistributorMlp h;
  // fan-in scaled hidden layer; the output layer starts at zero so a fresh
  // block emits zero neurotransmitters
  h.w1 = Tensor::randn({in_dim, hidden}, rng, 1.0 / std::sqrt(double(in_dim)),
                       true);
  h.b1 = Tensor::zeros({hidden}, true);
  h.w2 = Tensor::zeros({hidden, out_dim}, true);
  h.b2 = Tensor::zeros({out_dim}, true);
  return h;
}

Tensor DistributorMlp::forward(const Tensor& fused) const {
  if (fused.rank() != 2 || fused.dim(1) != w1.dim(0))
    throw ShapeError("distribute: fused " + shape_str(fused.shape()) +
                     " does not match distributor input " +
                     shape_str(w1.shape()));
  Tensor h = gelu(linear(fused, w1, b1));
  return linear(h, w2, b2);
}

std::vector<Tensor> DistributorMlp::trainable() const { return {w1, b1, w2, b2}; }

int64_t DistributorMlp::trainable_count() const {
  return w1.numel() + b1.numel() + w2.numel() + b2.numel();
}

RABlockParams RABlockParams::make(int layer_index, int64_t modalities,
                                  int64_t d, int64_t prompt_tokens,
                                  FusionKind fusion, bool sparse,
                                  bool learnable_prompt, Rng& rng) {
  if (modalities < 1) throw ConfigError("ra block: modalities must be >= 1");
  if (prompt_tokens < 0)
    throw ConfigError("ra block: prompt_tokens must be >= 0");
  RABlockParams p;
  p.layer_index = layer_index;
  p.modalities = modalities;
  p.dim = d;
  p.prompt_tokens = prompt_tokens;
  p.sparse = sparse;
  p.learnable_prompt = learnable_prompt;
  p.fusion = FusionStrategy::make(fusion, d);
  if (prompt_tokens > 0) {
    const int64_t in_dim = p.fusion.fused_dim(modalities);
    const int64_t out_dim = prompt_tokens * d;
    const int64_t n_dist = sparse ? modalities : 1;
    for (int64_t i = 0; i < n_dist; ++i)
      p.distributors.push_back(DistributorMlp::make(in_dim, d, out_dim, rng));
    if (learnable_prompt) {
      for (int64_t m = 0; m < modalities; ++m)
        p.prompts.push_back(Tensor::zeros({prompt_tokens, d}, true));
    }
  }
  return p;
}

std::vector<Tensor> RABlockParams::trainable() const {
  std::vector<Tensor> out;
  for (const auto& h : distributors) {
    auto t = h.trainable();
    out.insert(out.end(), t.begin(), t.end());
  }
  out.insert(out.end(), prompts.begin(), prompts.end());
  auto f = fusion.trainable();
  out.insert(out.end(), f.begin(), f.end());
  return out;
}

std::vector<std::pair<std::string, Tensor>> RABlockParams::named_trainable(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  static const char* mlp_names[] = {"w1", "b1", "w2", "b2"};
  for (size_t i = 0; i < distributors.size(); ++i) {
    auto t = distributors[i].trainable();
    for (size_t j = 0; j < t.size(); ++j)
      out.emplace_back(prefix + ".dist." + std::to_string(i) + "." +
                           mlp_names[j],
                       t[j]);
  }
  for (size_t m = 0; m < prompts.size(); ++m)
    out.emplace_back(prefix + ".q." + std::to_string(m), prompts[m]);
  if (fusion.kind == FusionKind::attention) {
    out.emplace_back(prefix + ".fusion.query", fusion.query);
    out.emplace_back(prefix + ".fusion.wk", fusion.wk);
    out.emplace_back(prefix + ".fusion.wv", fusion.wv);
  } else if (fusion.kind == FusionKind::moe) {
    out.emplace_back(prefix + ".fusion.gate", fusion.gate);
  }
  return out;
}

int64_t RABlockParams::trainable_count() const {
  int64_t n = 0;
  for (const Tensor& t : trainable()) n += t.numel();
  return n;
}

std::vector<Tensor> distribute(const Tensor& fused, const RABlockParams& p) {
  if (p.prompt_tokens == 0) return {};
  std::vector<Tensor> out;
  out.reserve(static_cast<size_t>(p.modalities));
  if (p.sparse) {
    for (int64_t m = 0; m < p.modalities; ++m)
      out.push_back(p.distributors[size_t(m)].forward(fused));
  } else {
    Tensor shared = p.distributors[0].forward(fused);
    for (int64_t m = 0; m < p.modalities; ++m) out.push_back(shared);
  }
  return out;
}

std::vector<Tensor> prompt_compose(std::span<const Tensor> neurotransmitters,
                                   const RABlockParams& p) {
  if (!p.learnable_prompt || p.prompt_tokens == 0)
    return {neurotransmitters.begin(), neurotransmitters.end()};
  if (int64_t(neurotransmitters.size()) != p.modalities)
    throw ShapeError("prompt_compose: expected " +
                     std::to_string(p.modalities) + " neurotransmitters, got " +
                     std::to_string(neurotransmitters.size()));
  std::vector<Tensor> out;
  out.reserve(neurotransmitters.size());
  for (int64_t m = 0; m < p.modalities; ++m) {
    const Tensor& g = neurotransmitters[size_t(m)];
    const int64_t kd = p.prompt_tokens * p.dim;
    if (g.rank() != 2 || g.dim(1) != kd)
      throw ShapeError("prompt_compose: neurotransmitter " +
                       shape_str(g.shape()) + " must be [B, " +
                       std::to_string(kd) + "]");
    out.push_back(broadcast_add(g, reshape(p.prompts[size_t(m)], {kd})));
  }
  return out;
}

std::vector<Tensor> ra_forward(std::span<const Tensor> features,
                               const RABlockParams& p) {
  if (int64_t(features.size()) != p.modalities)
    throw ShapeError("ra_forward: expected " + std::to_string(p.modalities) +
                     " modality features, got " +
                     std::to_string(features.size()));
  if (p.prompt_tokens == 0) return {};
  Tensor fused = integrate(features, p.fusion);
  std::vector<Tensor> neuro = distribute(fused, p);
  return prompt_compose(neuro, p);
}

}  // namespace sen
