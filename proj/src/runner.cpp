#include "sen/runner.hpp"

#include <cmath>

#include "sen/adapters.hpp"

namespace sen {

namespace {

constexpr uint64_t kBatchStream = 0x700;
constexpr uint64_t kGenericPointStream = 0x800;
constexpr int64_t kEvalChunk = 256;

// contrastive pairing: the first active modality scores as "video", the last
// as "audio"
std::pair<size_t, size_t> contrastive_streams(size_t modalities) {
  return {0, modalities - 1};
}

}  // namespace

Experiment::Experiment(SENConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate_or_throw();
  task_ = cfg_.build_task();
  sen_ = std::make_unique<SEN>(cfg_.build_spec(), cfg_.seed);
  needs_live_forward_ = (cfg_.training.arm == ArmKind::ra ||
                         cfg_.training.arm == ArmKind::transformer) &&
                        sen_->rounds() > 0 && cfg_.ra.prompt_tokens > 0;
  build_heads();
  std::vector<Tensor> trainables = sen_->trainable_parameters();
  trainables.insert(trainables.end(), head_params_.begin(), head_params_.end());
  AdamWConfig ocfg;
  ocfg.beta1 = cfg_.training.beta1;
  ocfg.beta2 = cfg_.training.beta2;
  ocfg.weight_decay = cfg_.training.weight_decay;
  opt_ = std::make_unique<AdamW>(std::move(trainables), ocfg);
  build_caches();
}

void Experiment::build_heads() {
  const int64_t d = cfg_.shared_dim;
  // the head starts at a seeded random point: with a zero head the parity
  // task is a saddle (context is uncorrelated with the label, so neither the
  // head nor the RA would receive useful gradients)
  Rng rng(derive_seed(cfg_.seed, 0x600));
  const double head_std = 1.0 / std::sqrt(double(d));
  switch (cfg_.task.kind) {
    case TaskKind::parity:
      head_params_ = {Tensor::randn({d, 2}, rng, head_std, true),
                      Tensor::zeros({2}, true)};
      head_names_ = {"head.w", "head.b"};
      break;
    case TaskKind::contrastive:
      // trainable log temperature on the summed similarity logits
      head_params_ = {Tensor::from_data({1}, {std::log(10.0)}, true)};
      head_names_ = {"head.logit_scale"};
      break;
    case TaskKind::injection:
      head_params_ = {Tensor::randn({d, d}, rng, head_std, true),
                      Tensor::zeros({d}, true)};
      head_names_ = {"head.w", "head.b"};
      break;
  }
}

void Experiment::cache_split(std::span<const Tensor> inputs, int64_t n,
                             std::vector<ModalCache>& out) {
  const int64_t m_count = sen_->modalities();
  out.assign(static_cast<size_t>(m_count), ModalCache{});
  const auto& active = cfg_.active_modalities();

  for (int64_t start = 0; start < n; start += kEvalChunk) {
    const int64_t b = std::min(kEvalChunk, n - start);
    std::vector<Tensor> chunk_inputs;
    chunk_inputs.reserve(static_cast<size_t>(m_count));
    for (int64_t j = 0; j < m_count; ++j) {
      const Tensor& full = inputs[size_t(active[size_t(j)])];
      const int64_t seq = sen_->neuron(j).config().seq_len;
      chunk_inputs.push_back(slice(full, 0, start * seq, b * seq));
    }
    std::vector<Tensor> embedded = sen_->embed_all(chunk_inputs, b);
    std::vector<Tensor> pass1 = sen_->pass1_pooled(embedded, b);
    if (needs_live_forward_) {
      for (int64_t j = 0; j < m_count; ++j) {
        auto ev = embedded[size_t(j)].values();
        auto pv = pass1[size_t(j)].values();
        auto& mc = out[size_t(j)];
        mc.embedded.insert(mc.embedded.end(), ev.begin(), ev.end());
        mc.pass1.insert(mc.pass1.end(), pv.begin(), pv.end());
      }
    } else {
      // frozen path: finals are constants, resolve them once
      SEN::ForwardResult res = sen_->forward_from_cache(embedded, pass1, b);
      for (int64_t j = 0; j < m_count; ++j) {
        auto fv = res.finals[size_t(j)].values();
        auto& mc = out[size_t(j)];
        mc.finals.insert(mc.finals.end(), fv.begin(), fv.end());
      }
    }
  }
}

void Experiment::build_caches() {
  cache_split(task_.train_inputs, task_.train_size(), train_cache_);
  cache_split(task_.test_inputs, task_.test_size(), test_cache_);
}

Tensor Experiment::gather_rows(const std::vector<double>& cache,
                               int64_t row_width,
                               std::span<const int64_t> rows) const {
  std::vector<double> out;
  out.resize(rows.size() * size_t(row_width));
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy(cache.begin() + rows[i] * row_width,
              cache.begin() + (rows[i] + 1) * row_width,
              out.begin() + int64_t(i) * row_width);
  return Tensor::from_data({int64_t(rows.size()), row_width}, std::move(out));
}

SEN::ForwardResult Experiment::batch_forward(
    const std::vector<ModalCache>& caches, std::span<const int64_t> rows) {
  const int64_t m_count = sen_->modalities();
  const int64_t d = sen_->shared_dim();
  const int64_t b = int64_t(rows.size());
  if (needs_live_forward_) {
    std::vector<Tensor> embedded, pass1;
    embedded.reserve(static_cast<size_t>(m_count));
    pass1.reserve(static_cast<size_t>(m_count));
    for (int64_t j = 0; j < m_count; ++j) {
      const int64_t seq = sen_->neuron(j).config().seq_len;
      Tensor emb = gather_rows(caches[size_t(j)].embedded, seq * d, rows);
      embedded.push_back(reshape(emb, {b * seq, d}));
      pass1.push_back(gather_rows(caches[size_t(j)].pass1, d, rows));
    }
    return sen_->forward_from_cache(embedded, pass1, b);
  }
  std::vector<Tensor> finals;
  finals.reserve(static_cast<size_t>(m_count));
  for (int64_t j = 0; j < m_count; ++j)
    finals.push_back(gather_rows(caches[size_t(j)].finals, d, rows));
  std::vector<Tensor> stacked;
  stacked.reserve(finals.size());
  for (const Tensor& f : finals) stacked.push_back(reshape(f, {b, 1, d}));
  Tensor context = reduce_mean(concat(stacked, 1), 1);
  return {std::move(finals), std::move(context)};
}

Tensor Experiment::batch_loss(const SEN::ForwardResult& fwd,
                              std::span<const int64_t> rows,
                              bool train_split) {
  switch (cfg_.task.kind) {
    case TaskKind::parity: {
      Tensor logits = linear(fwd.context, head_params_[0], head_params_[1]);
      std::vector<int> labels(rows.size());
      const auto& src = train_split ? task_.train_labels : task_.test_labels;
      for (size_t i = 0; i < rows.size(); ++i)
        labels[i] = src[size_t(rows[i])];
      return softmax_cross_entropy(logits, labels);
    }
    case TaskKind::contrastive: {
      const auto [vi, ai] = contrastive_streams(fwd.finals.size());
      Tensor scores = add(cosine_scores(fwd.finals[vi], task_.classes),
                          cosine_scores(fwd.finals[ai], task_.classes));
      Tensor logits = scalar_mul(scores, exp(head_params_[0]));
      std::vector<int> labels(rows.size());
      const auto& src = train_split ? task_.train_labels : task_.test_labels;
      for (size_t i = 0; i < rows.size(); ++i)
        labels[i] = src[size_t(rows[i])];
      return softmax_cross_entropy(logits, labels);
    }
    case TaskKind::injection: {
      Tensor ctx = linear(fwd.context, head_params_[0], head_params_[1]);
      const int64_t target_size = shape_numel(task_.target_shape);
      Tensor pred = context_inject_rows(ctx, target_size);
      const Tensor& all = train_split ? task_.train_targets : task_.test_targets;
      std::vector<double> t;
      t.reserve(rows.size() * size_t(target_size));
      const double* tv = all.values().data();
      for (int64_t r : rows)
        t.insert(t.end(), tv + r * target_size, tv + (r + 1) * target_size);
      Tensor target = Tensor::from_data({int64_t(rows.size()), target_size},
                                        std::move(t));
      return mse_loss(pred, target);
    }
  }
  throw ConfigError("unknown task kind");
}

double Experiment::evaluate() {
  const int64_t n = task_.test_size();
  switch (cfg_.task.kind) {
    case TaskKind::parity: {
      int64_t correct = 0;
      for (int64_t start = 0; start < n; start += kEvalChunk) {
        const int64_t b = std::min(kEvalChunk, n - start);
        std::vector<int64_t> rows(static_cast<size_t>(b));
        for (int64_t i = 0; i < b; ++i) rows[size_t(i)] = start + i;
        SEN::ForwardResult fwd = batch_forward(test_cache_, rows);
        Tensor logits = linear(fwd.context, head_params_[0], head_params_[1]);
        const double* lv = logits.values().data();
        for (int64_t i = 0; i < b; ++i) {
          const int pred = lv[i * 2 + 1] > lv[i * 2] ? 1 : 0;
          if (pred == task_.test_labels[size_t(start + i)]) ++correct;
        }
      }
      return 100.0 * double(correct) / double(n);
    }
    case TaskKind::contrastive: {
      int64_t correct = 0;
      for (int64_t start = 0; start < n; start += kEvalChunk) {
        const int64_t b = std::min(kEvalChunk, n - start);
        std::vector<int64_t> rows(static_cast<size_t>(b));
        for (int64_t i = 0; i < b; ++i) rows[size_t(i)] = start + i;
        SEN::ForwardResult fwd = batch_forward(test_cache_, rows);
        const auto [vi, ai] = contrastive_streams(fwd.finals.size());
        auto preds = contrastive_predict_batch(
            fwd.finals[vi].detach(), fwd.finals[ai].detach(), task_.classes);
        for (int64_t i = 0; i < b; ++i)
          if (preds[size_t(i)] == task_.test_labels[size_t(start + i)])
            ++correct;
      }
      return 100.0 * double(correct) / double(n);
    }
    case TaskKind::injection: {
      double sum = 0.0;
      int64_t chunks = 0;
      for (int64_t start = 0; start < n; start += kEvalChunk) {
        const int64_t b = std::min(kEvalChunk, n - start);
        std::vector<int64_t> rows(static_cast<size_t>(b));
        for (int64_t i = 0; i < b; ++i) rows[size_t(i)] = start + i;
        SEN::ForwardResult fwd = batch_forward(test_cache_, rows);
        sum += batch_loss(fwd, rows, false).item() * double(b);
        chunks += b;
      }
      return sum / double(chunks);
    }
  }
  throw ConfigError("unknown task kind");
}

std::string Experiment::metric_name() const {
  return cfg_.task.kind == TaskKind::injection ? "test_mse" : "test_accuracy";
}

TrainOutcome Experiment::run(MetricsWriter* writer, int64_t stop_after) {
  const int64_t total = cfg_.training.steps;
  const int64_t stop = stop_after < 0 ? total : std::min(stop_after, total);
  const std::string arm = to_string(cfg_.training.arm);
  TrainOutcome out;
  out.encoder_hash_before = sen_->encoders_sha256();

  auto emit = [&](int64_t step, const std::string& metric, double value) {
    out.metrics.push_back({step, arm, metric, value, cfg_.seed});
    if (writer) writer->write(step, arm, metric, value, cfg_.seed);
  };

  if (step_ == 0) emit(0, metric_name(), evaluate());

  // allocate zero gradient buffers so parameters a loss never touches (e.g.
  // an unused modality's last-round distributor) still satisfy the
  // optimizer's populated-grads precondition
  for (size_t i = 0; i < opt_->size(); ++i) Tensor(opt_->param(i)).zero_grad();

  const int64_t n_train = task_.train_size();
  std::vector<int64_t> rows(static_cast<size_t>(cfg_.training.batch));
  for (int64_t t = step_ + 1; t <= stop; ++t) {
    Rng batch_rng(derive_seed(derive_seed(cfg_.seed, kBatchStream), uint64_t(t)));
    for (auto& r : rows) r = batch_rng.uniform_int(n_train);

    SEN::ForwardResult fwd = batch_forward(train_cache_, rows);
    Tensor loss = batch_loss(fwd, rows, true);
    const double loss_value = loss.item();
    if (!std::isfinite(loss_value))
      throw NumericError("train: non-finite loss " +
                         std::to_string(loss_value) + " at step " +
                         std::to_string(t) + "; aborting");
    loss.backward();
    const double lr = cfg_.training.cosine_schedule
                          ? cosine_lr(t - 1, cfg_.training.base_lr, total)
                          : cfg_.training.base_lr;
    opt_->step(lr);
    for (size_t i = 0; i < opt_->size(); ++i)
      Tensor(opt_->param(i)).zero_grad();
    step_ = t;

    if (t % cfg_.training.eval_interval == 0 || t == total) {
      emit(t, "train_loss", loss_value);
      emit(t, metric_name(), evaluate());
    }
  }

  out.final_metric = evaluate();
  out.steps_run = step_;
  out.encoder_hash_after = sen_->encoders_sha256();
  if (out.encoder_hash_after != out.encoder_hash_before)
    throw NumericError("train: frozen encoder parameters changed during the "
                       "run (freeze invariant violated)");
  return out;
}

std::vector<std::pair<std::string, Tensor>> Experiment::named_parameters()
    const {
  auto named = sen_->named_trainables();
  for (size_t i = 0; i < head_params_.size(); ++i)
    named.emplace_back(head_names_[i], head_params_[i]);
  return named;
}

int64_t Experiment::head_parameter_count() const {
  int64_t n = 0;
  for (const Tensor& t : head_params_) n += t.numel();
  return n;
}

void Experiment::save_checkpoint(const std::string& path,
                                 CheckpointDtype dtype) const {
  auto named = named_parameters();
  std::vector<std::pair<std::string, Tensor>> entries = named;
  for (size_t i = 0; i < opt_->size(); ++i) {
    // optimizer slots follow the (sen trainables, head) order used to build it
    const std::string& name = i < named.size() ? named[i].first
                                               : "param." + std::to_string(i);
    auto& m = const_cast<AdamW&>(*opt_).moment1(i);
    auto& v = const_cast<AdamW&>(*opt_).moment2(i);
    entries.emplace_back("opt.m." + name,
                         Tensor::from_data({int64_t(m.size())},
                                           std::vector<double>(m)));
    entries.emplace_back("opt.v." + name,
                         Tensor::from_data({int64_t(v.size())},
                                           std::vector<double>(v)));
  }
  CheckpointMeta meta;
  meta.config_digest = cfg_.digest();
  meta.encoder_seeds = sen_->spec().encoder_seeds;
  meta.seed = cfg_.seed;
  meta.step = step_;
  write_checkpoint(path, entries, meta, dtype);
}

void Experiment::load_checkpoint(const std::string& path) {
  CheckpointFile file = read_checkpoint(path);
  if (file.meta.config_digest != cfg_.digest())
    throw IoError("checkpoint: config digest mismatch (checkpoint " +
                  file.meta.config_digest.substr(0, 12) + "..., config " +
                  cfg_.digest().substr(0, 12) + "...)");
  if (file.meta.encoder_seeds != sen_->spec().encoder_seeds)
    throw IoError("checkpoint: encoder seeds do not match the config");
  auto named = named_parameters();
  for (auto& [name, tensor] : named) {
    const CheckpointEntry* e = file.find(name);
    if (!e) throw IoError("checkpoint: missing tensor '" + name + "'");
    if (int64_t(e->data.size()) != tensor.numel())
      throw IoError("checkpoint: size mismatch for '" + name + "'");
    std::copy(e->data.begin(), e->data.end(), tensor.values_mut().begin());
  }
  for (size_t i = 0; i < opt_->size(); ++i) {
    const std::string& name = named[i].first;
    const CheckpointEntry* em = file.find("opt.m." + name);
    const CheckpointEntry* ev = file.find("opt.v." + name);
    if (!em || !ev)
      throw IoError("checkpoint: missing optimizer state for '" + name + "'");
    if (em->data.size() != opt_->moment1(i).size() ||
        ev->data.size() != opt_->moment2(i).size())
      throw IoError("checkpoint: optimizer state size mismatch for '" + name +
                    "'");
    opt_->moment1(i) = em->data;
    opt_->moment2(i) = ev->data;
  }
  step_ = file.meta.step;
  opt_->set_step_count(file.meta.step);
}

// ---- gradient-check entry points ----

GradCheckResult sen_gradcheck(const SENConfig& cfg) {
  SEN sen(cfg.build_spec(), cfg.seed);
  std::vector<Tensor> params = sen.trainable_parameters();
  if (params.empty())
    throw ConfigError("gradcheck: the configured arm has no trainable "
                      "parameters");
  // move every trainable tensor to a generic point so zero-initialized
  // output layers do not hide sensitivities
  Rng rng(derive_seed(cfg.seed, kGenericPointStream));
  for (Tensor& p : params)
    for (double& v : p.values_mut()) v = 0.3 * rng.gaussian();

  // a small random batch; several samples keep fusion softmaxes away from
  // saturation, where finite differences lose conditioning
  const int64_t batch = 8;
  Rng input_rng(derive_seed(cfg.seed, kGenericPointStream + 1));
  std::vector<Tensor> inputs;
  for (int64_t m = 0; m < sen.modalities(); ++m) {
    const EncoderConfig& e = sen.neuron(m).config();
    inputs.push_back(Tensor::randn({batch * e.seq_len, e.input_dim},
                                   input_rng, 1.0, false));
  }
  const double denom =
      double(batch) * double(sen.modalities()) * double(sen.shared_dim());
  auto loss_fn = [&]() {
    SEN::ForwardResult fwd = sen.forward(inputs, batch);
    Tensor cat = concat(fwd.finals, 1);
    Tensor a = divide(sum_all(mul(cat, cat)), denom);
    Tensor b = divide(sum_all(mul(fwd.context, fwd.context)),
                      double(batch) * double(sen.shared_dim()));
    // the extra shrink keeps ulp-level probe noise at exactly-zero-gradient
    // entries (e.g. key biases, which softmax shift-invariance kills) well
    // below the relative-error floor
    return divide(add(a, b), 16.0);
  };
  return grad_check(loss_fn, params);
}

int64_t ra_layer_closed_form(int64_t modalities, int64_t d, int64_t k,
                             FusionKind fusion, bool sparse,
                             bool learnable_prompt) {
  if (k == 0) return 0;
  const int64_t fused = fusion == FusionKind::concat ? modalities * d : d;
  const int64_t per_mlp = fused * d + d + d * (k * d) + k * d;
  int64_t count = (sparse ? modalities : 1) * per_mlp;
  if (learnable_prompt) count += modalities * k * d;
  if (fusion == FusionKind::attention) count += d + 2 * d * d;
  if (fusion == FusionKind::moe) count += d;
  return count;
}

std::vector<GradCheckSweepEntry> gradcheck_sweep() {
  std::vector<GradCheckSweepEntry> out;
  const FusionKind kinds[] = {FusionKind::avg, FusionKind::add,
                              FusionKind::concat, FusionKind::attention,
                              FusionKind::moe};
  for (FusionKind fusion : kinds) {
    for (bool sparse : {true, false}) {
      for (bool prompts : {true, false}) {
        SENConfig cfg;
        cfg.seed = 7;
        cfg.shared_dim = 8;
        cfg.modalities.clear();
        for (const char* name : {"video", "text", "depth"}) {
          EncoderConfig e;
          e.modality_name = name;
          e.input_dim = 4;
          e.seq_len = 4;
          e.depth = 2;
          e.heads = 2;
          e.shared_dim = 8;
          e.max_prompt_tokens = 4;
          cfg.modalities.push_back(e);
        }
        cfg.ra.layers = 2;
        cfg.ra.prompt_tokens = 2;
        cfg.ra.fusion = fusion;
        cfg.ra.sparse = sparse;
        cfg.ra.learnable_prompt = prompts;
        cfg.training.arm = ArmKind::ra;

        GradCheckSweepEntry entry;
        entry.label = to_string(fusion) + (sparse ? "/sparse" : "/dense") +
                      (prompts ? "/q_on" : "/q_off");
        entry.result = sen_gradcheck(cfg);
        SEN sen(cfg.build_spec(), cfg.seed);
        entry.trainable_count = sen.count_parameters().second;
        entry.closed_form_count =
            cfg.ra.layers * ra_layer_closed_form(3, 8, 2, fusion, sparse,
                                                 prompts);
        entry.ra_layer_count =
            ra_layer_closed_form(3, 8, 2, fusion, sparse, prompts);
        if (!sen.tf_layers().empty())
          entry.transformer_layer_count = sen.tf_layers()[0].trainable_count();
        out.push_back(std::move(entry));
      }
    }
  }
  return out;
}

}  // namespace sen
