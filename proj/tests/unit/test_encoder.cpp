#include <doctest.h>

#include <cmath>

#include "sen/encoder.hpp"
#include "test_helpers.hpp"

using namespace sen;
using sen::testing::to_vec;

namespace {

EncoderConfig small_cfg() {
  EncoderConfig cfg;
  cfg.modality_name = "video";
  cfg.input_dim = 6;
  cfg.seq_len = 8;
  cfg.depth = 2;
  cfg.heads = 2;
  cfg.shared_dim = 16;
  cfg.max_prompt_tokens = 8;
  return cfg;
}

// closed-form parameter count, kept independent of SuperNeuron internals
int64_t expected_count(const EncoderConfig& c) {
  const int64_t d = c.shared_dim;
  const int64_t h = c.mlp_ratio * d;
  const int64_t embed = c.input_dim * d + d;
  const int64_t pos = (c.seq_len + c.max_prompt_tokens) * d;
  const int64_t block = 2 * d + 4 * (d * d + d) + 2 * d + (d * h + h) +
                        (h * d + d);
  return embed + pos + c.depth * block + 2 * d;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("construction is a pure function of (config, seed)") {
  const EncoderConfig cfg = small_cfg();
  SuperNeuron a(cfg, 42), b(cfg, 42), c(cfg, 43);
  CHECK(a.parameters_sha256() == b.parameters_sha256());
  CHECK(a.parameters_sha256() != c.parameters_sha256());
}

TEST_CASE("parameter count matches the closed form") {
  const EncoderConfig cfg = small_cfg();
  SuperNeuron n(cfg, 1);
  CHECK(n.parameter_count() == expected_count(cfg));

  EncoderConfig other = cfg;
  other.depth = 3;
  other.input_dim = 10;
  other.max_prompt_tokens = 4;
  other.max_prompt_tokens = 4;
  SuperNeuron m(other, 1);
  CHECK(m.parameter_count() == expected_count(other));
}

TEST_CASE("every parameter is frozen") {
  SuperNeuron n(small_cfg(), 5);
  for (const Tensor& p : n.parameters()) CHECK_FALSE(p.requires_grad());
}

TEST_CASE("encode shape contract without prompts") {
  const EncoderConfig cfg = small_cfg();
  SuperNeuron n(cfg, 7);
  Rng rng(1);
  Tensor tokens = Tensor::randn({cfg.seq_len, cfg.input_dim}, rng, 1.0);
  auto out = n.encode(tokens);
  CHECK(out.token_feats.shape() == Shape{cfg.seq_len, cfg.shared_dim});
  CHECK(out.pooled.shape() == Shape{cfg.shared_dim});
}

TEST_CASE("encode shape contract with prompts: k=4, n=8 gives 12 tokens") {
  const EncoderConfig cfg = small_cfg();
  SuperNeuron n(cfg, 7);
  Rng rng(2);
  Tensor tokens = Tensor::randn({cfg.seq_len, cfg.input_dim}, rng, 1.0);
  Tensor prompts = Tensor::randn({4, cfg.shared_dim}, rng, 1.0);
  auto out = n.encode(tokens, &prompts);
  CHECK(out.token_feats.shape() == Shape{12, cfg.shared_dim});
  CHECK(out.pooled.shape() == Shape{cfg.shared_dim});
}

TEST_CASE("prompt width and count are validated") {
  const EncoderConfig cfg = small_cfg();
  SuperNeuron n(cfg, 7);
  Rng rng(3);
  Tensor tokens = Tensor::randn({cfg.seq_len, cfg.input_dim}, rng, 1.0);
  Tensor wrong_width = Tensor::randn({4, cfg.shared_dim + 1}, rng, 1.0);
  CHECK_THROWS_AS(n.encode(tokens, &wrong_width), ShapeError);
  Tensor too_many =
      Tensor::randn({cfg.max_prompt_tokens + 1, cfg.shared_dim}, rng, 1.0);
  CHECK_THROWS_AS(n.encode(tokens, &too_many), ShapeError);
}

TEST_CASE("gradients reach prompts but never encoder parameters") {
  const EncoderConfig cfg = small_cfg();
  SuperNeuron n(cfg, 11);
  Rng rng(4);
  Tensor tokens = Tensor::randn({cfg.seq_len, cfg.input_dim}, rng, 1.0);
  Tensor prompts = Tensor::randn({4, cfg.shared_dim}, rng, 0.5, true);
  auto out = n.encode(tokens, &prompts);
  sum_all(mul(out.pooled, out.pooled)).backward();
  REQUIRE(prompts.has_grad());
  bool any_nonzero = false;
  for (double g : prompts.grad()) any_nonzero = any_nonzero || g != 0.0;
  CHECK(any_nonzero);
  for (const Tensor& p : n.parameters()) CHECK_FALSE(p.has_grad());
}

TEST_CASE("pooled output is sensitive to every prompt entry") {
  const EncoderConfig cfg = small_cfg();
  SuperNeuron n(cfg, 13);
  Rng rng(5);
  Tensor tokens = Tensor::randn({cfg.seq_len, cfg.input_dim}, rng, 1.0);
  Tensor prompts = Tensor::randn({2, cfg.shared_dim}, rng, 0.5);
  const std::vector<double> base = to_vec(n.encode(tokens, &prompts).pooled);
  auto vals = prompts.values_mut();
  for (size_t i = 0; i < vals.size(); ++i) {
    const double saved = vals[i];
    vals[i] = saved + 1e-3;
    const std::vector<double> moved = to_vec(n.encode(tokens, &prompts).pooled);
    vals[i] = saved;
    double diff = 0.0;
    for (size_t j = 0; j < base.size(); ++j)
      diff += std::abs(moved[j] - base[j]);
    CHECK(diff > 0.0);
  }
}

TEST_CASE("batched encode equals per-sample encode bitwise") {
  const EncoderConfig cfg = small_cfg();
  SuperNeuron n(cfg, 17);
  Rng rng(6);
  const int64_t B = 3;
  Tensor batch_tokens =
      Tensor::randn({B * cfg.seq_len, cfg.input_dim}, rng, 1.0);
  Tensor batch_prompts = Tensor::randn({B * 2, cfg.shared_dim}, rng, 0.5);
  auto batched = n.encode_batch(batch_tokens, B, &batch_prompts, 2);
  for (int64_t b = 0; b < B; ++b) {
    Tensor tokens = slice(batch_tokens, 0, b * cfg.seq_len, cfg.seq_len);
    Tensor prompts = slice(batch_prompts, 0, b * 2, 2);
    auto single = n.encode(tokens, &prompts);
    for (int64_t j = 0; j < cfg.shared_dim; ++j)
      CHECK(batched.pooled.at({b, j}) == single.pooled.at({j}));
  }
}

TEST_CASE("encode is deterministic") {
  const EncoderConfig cfg = small_cfg();
  SuperNeuron n(cfg, 19);
  Rng rng(7);
  Tensor tokens = Tensor::randn({cfg.seq_len, cfg.input_dim}, rng, 1.0);
  CHECK(to_vec(n.encode(tokens).pooled) == to_vec(n.encode(tokens).pooled));
}

TEST_CASE("invalid configs are rejected") {
  EncoderConfig cfg = small_cfg();
  cfg.heads = 3;  // does not divide 16
  CHECK_THROWS_AS(SuperNeuron(cfg, 1), ConfigError);
  cfg = small_cfg();
  cfg.depth = 0;
  CHECK_THROWS_AS(SuperNeuron(cfg, 1), ConfigError);
  cfg = small_cfg();
  cfg.seq_len = 0;
  CHECK_THROWS_AS(SuperNeuron(cfg, 1), ConfigError);
}

}  // TEST_SUITE
