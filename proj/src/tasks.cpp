#include "sen/tasks.hpp"

#include <cmath>

#include "sen/sha256.hpp"

namespace sen {

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "parity") return TaskKind::parity;
  if (s == "contrastive") return TaskKind::contrastive;
  if (s == "injection") return TaskKind::injection;
  throw ConfigError("unknown task kind '" + s +
                    "' (expected parity|contrastive|injection)");
}

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::parity: return "parity";
    case TaskKind::contrastive: return "contrastive";
    case TaskKind::injection: return "injection";
  }
  return "?";
}

std::string TaskData::sha256() const {
  Sha256 h;
  for (const Tensor& t : train_inputs) h.update(t.values());
  for (const Tensor& t : test_inputs) h.update(t.values());
  if (!train_labels.empty())
    h.update(train_labels.data(), train_labels.size() * sizeof(int));
  if (!test_labels.empty())
    h.update(test_labels.data(), test_labels.size() * sizeof(int));
  if (train_targets.defined()) h.update(train_targets.values());
  if (test_targets.defined()) h.update(test_targets.values());
  return h.hex_digest();
}

namespace {

// Two orthonormal vectors from a seeded stream, Gram-Schmidt.
void orthonormal_pair(Rng& rng, int64_t dim, std::vector<double>& u,
                      std::vector<double>& v) {
  u.resize(static_cast<size_t>(dim));
  v.resize(static_cast<size_t>(dim));
  for (auto& x : u) x = rng.gaussian();
  double nu = 0.0;
  for (double x : u) nu += x * x;
  nu = std::sqrt(nu);
  for (auto& x : u) x /= nu;
  for (auto& x : v) x = rng.gaussian();
  double dot = 0.0;
  for (int64_t i = 0; i < dim; ++i) dot += u[size_t(i)] * v[size_t(i)];
  for (int64_t i = 0; i < dim; ++i) v[size_t(i)] -= dot * u[size_t(i)];
  double nv = 0.0;
  for (double x : v) nv += x * x;
  nv = std::sqrt(nv);
  for (auto& x : v) x /= nv;
}

}  // namespace

TaskData gen_parity_task(const ParityTaskSpec& spec, uint64_t seed) {
  if (spec.modalities < 2)
    throw ConfigError("parity task: needs at least 2 modalities");
  if (spec.input_dim < 2)
    throw ConfigError("parity task: input_dim must be >= 2 for orthogonal "
                      "patterns");
  TaskData data;
  data.kind = TaskKind::parity;
  data.modalities = spec.modalities;
  data.seq_len = spec.seq_len;
  data.input_dim = spec.input_dim;
  data.seed = seed;

  Rng pattern_rng(derive_seed(seed, 0x11));
  std::vector<std::vector<double>> pat0(static_cast<size_t>(spec.modalities));
  std::vector<std::vector<double>> pat1(static_cast<size_t>(spec.modalities));
  for (int64_t m = 0; m < spec.modalities; ++m) {
    orthonormal_pair(pattern_rng, spec.input_dim, pat0[size_t(m)],
                     pat1[size_t(m)]);
    for (auto& x : pat0[size_t(m)]) x *= spec.pattern_scale;
    for (auto& x : pat1[size_t(m)]) x *= spec.pattern_scale;
  }

  Rng sample_rng(derive_seed(seed, 0x12));
  const int64_t total = spec.train_samples + spec.test_samples;
  std::vector<std::vector<double>> tokens(static_cast<size_t>(spec.modalities));
  for (auto& t : tokens)
    t.resize(static_cast<size_t>(total * spec.seq_len * spec.input_dim));
  std::vector<int> labels(static_cast<size_t>(total));
  for (int64_t s = 0; s < total; ++s) {
    int parity = 0;
    for (int64_t m = 0; m < spec.modalities; ++m) {
      const bool bit = sample_rng.bernoulli();
      parity ^= bit ? 1 : 0;
      const auto& pat = bit ? pat1[size_t(m)] : pat0[size_t(m)];
      double* dst = tokens[size_t(m)].data() +
                    s * spec.seq_len * spec.input_dim;
      for (int64_t t = 0; t < spec.seq_len; ++t)
        for (int64_t j = 0; j < spec.input_dim; ++j)
          dst[t * spec.input_dim + j] =
              pat[size_t(j)] + spec.noise * sample_rng.gaussian();
    }
    labels[size_t(s)] = parity;
  }

  const int64_t stride = spec.seq_len * spec.input_dim;
  for (int64_t m = 0; m < spec.modalities; ++m) {
    auto& buf = tokens[size_t(m)];
    std::vector<double> train(buf.begin(),
                              buf.begin() + spec.train_samples * stride);
    std::vector<double> test(buf.begin() + spec.train_samples * stride,
                             buf.end());
    data.train_inputs.push_back(Tensor::from_data(
        {spec.train_samples * spec.seq_len, spec.input_dim},
        std::move(train)));
    data.test_inputs.push_back(Tensor::from_data(
        {spec.test_samples * spec.seq_len, spec.input_dim}, std::move(test)));
  }
  data.train_labels.assign(labels.begin(),
                           labels.begin() + spec.train_samples);
  data.test_labels.assign(labels.begin() + spec.train_samples, labels.end());
  return data;
}

TaskData gen_contrastive_task(const ContrastiveTaskSpec& spec, uint64_t seed) {
  if (spec.classes > spec.dim)
    throw ConfigError("contrastive task: " + std::to_string(spec.classes) +
                      " orthonormal classes do not fit in dim " +
                      std::to_string(spec.dim));
  if (spec.classes < 2)
    throw ConfigError("contrastive task: needs at least 2 classes");
  TaskData data;
  data.kind = TaskKind::contrastive;
  data.modalities = spec.modalities;
  data.seq_len = spec.seq_len;
  data.input_dim = spec.dim;
  data.seed = seed;
  data.num_classes = spec.classes;

  // orthonormal class embeddings via Gram-Schmidt on a seeded Gaussian draw
  Rng class_rng(derive_seed(seed, 0x21));
  std::vector<double> basis(static_cast<size_t>(spec.classes * spec.dim));
  for (int64_t c = 0; c < spec.classes; ++c) {
    double* row = basis.data() + c * spec.dim;
    for (int64_t j = 0; j < spec.dim; ++j) row[j] = class_rng.gaussian();
    for (int64_t prev = 0; prev < c; ++prev) {
      const double* p = basis.data() + prev * spec.dim;
      double dot = 0.0;
      for (int64_t j = 0; j < spec.dim; ++j) dot += row[j] * p[j];
      for (int64_t j = 0; j < spec.dim; ++j) row[j] -= dot * p[j];
    }
    double norm = 0.0;
    for (int64_t j = 0; j < spec.dim; ++j) norm += row[j] * row[j];
    norm = std::sqrt(norm);
    for (int64_t j = 0; j < spec.dim; ++j) row[j] /= norm;
  }
  std::vector<std::string> names;
  for (int64_t c = 0; c < spec.classes; ++c)
    names.push_back("class_" + std::to_string(c));
  data.classes = ClassEmbeddings::normalized(
      Tensor::from_data({spec.classes, spec.dim}, basis), std::move(names));

  Rng sample_rng(derive_seed(seed, 0x22));
  const int64_t total = spec.train_samples + spec.test_samples;
  std::vector<std::vector<double>> tokens(static_cast<size_t>(spec.modalities));
  for (auto& t : tokens) t.resize(static_cast<size_t>(total * spec.seq_len * spec.dim));
  std::vector<int> labels(static_cast<size_t>(total));
  std::vector<double> feat(static_cast<size_t>(spec.dim));
  for (int64_t s = 0; s < total; ++s) {
    const int64_t y = sample_rng.uniform_int(spec.classes);
    labels[size_t(s)] = int(y);
    for (int64_t m = 0; m < spec.modalities; ++m) {
      const double* e = basis.data() + y * spec.dim;
      for (int64_t j = 0; j < spec.dim; ++j)
        feat[size_t(j)] = e[j] + spec.noise * sample_rng.gaussian();
      double* dst = tokens[size_t(m)].data() + s * spec.seq_len * spec.dim;
      for (int64_t t = 0; t < spec.seq_len; ++t)
        for (int64_t j = 0; j < spec.dim; ++j)
          dst[t * spec.dim + j] = feat[size_t(j)];
    }
  }

  const int64_t stride = spec.seq_len * spec.dim;
  for (int64_t m = 0; m < spec.modalities; ++m) {
    auto& buf = tokens[size_t(m)];
    std::vector<double> train(buf.begin(),
                              buf.begin() + spec.train_samples * stride);
    std::vector<double> test(buf.begin() + spec.train_samples * stride,
                             buf.end());
    data.train_inputs.push_back(Tensor::from_data(
        {spec.train_samples * spec.seq_len, spec.dim}, std::move(train)));
    data.test_inputs.push_back(Tensor::from_data(
        {spec.test_samples * spec.seq_len, spec.dim}, std::move(test)));
  }
  data.train_labels.assign(labels.begin(),
                           labels.begin() + spec.train_samples);
  data.test_labels.assign(labels.begin() + spec.train_samples, labels.end());
  return data;
}

TaskData gen_injection_task(const InjectionTaskSpec& spec, uint64_t seed) {
  if (spec.modalities < 2)
    throw ConfigError("injection task: needs at least 2 modalities");
  if (spec.latent_dim < 1)
    throw ConfigError("injection task: latent_dim must be >= 1");
  TaskData data;
  data.kind = TaskKind::injection;
  data.modalities = spec.modalities;
  data.seq_len = spec.seq_len;
  data.input_dim = spec.input_dim;
  data.seed = seed;
  data.target_shape = spec.target_shape;
  const int64_t target_size = shape_numel(spec.target_shape);
  if (target_size < 1)
    throw ConfigError("injection task: empty target shape");

  // fixed encodings: per-modality token patterns of the latent, and the
  // readout map applied to the cross-modal elementwise product
  Rng map_rng(derive_seed(seed, 0x31));
  std::vector<std::vector<double>> encode(static_cast<size_t>(spec.modalities));
  for (auto& e : encode) {
    e.resize(static_cast<size_t>(spec.input_dim * spec.latent_dim));
    for (auto& x : e) x = map_rng.gaussian() / std::sqrt(double(spec.latent_dim));
  }
  std::vector<double> readout(static_cast<size_t>(target_size * spec.latent_dim));
  for (auto& x : readout) x = map_rng.gaussian() / std::sqrt(double(spec.latent_dim));

  Rng sample_rng(derive_seed(seed, 0x32));
  const int64_t total = spec.train_samples + spec.test_samples;
  std::vector<std::vector<double>> tokens(static_cast<size_t>(spec.modalities));
  for (auto& t : tokens)
    t.resize(static_cast<size_t>(total * spec.seq_len * spec.input_dim));
  std::vector<double> targets(static_cast<size_t>(total * target_size));
  std::vector<double> z(static_cast<size_t>(spec.latent_dim));
  std::vector<double> prod(static_cast<size_t>(spec.latent_dim));
  for (int64_t s = 0; s < total; ++s) {
    std::fill(prod.begin(), prod.end(), 1.0);
    for (int64_t m = 0; m < spec.modalities; ++m) {
      for (int64_t j = 0; j < spec.latent_dim; ++j) {
        z[size_t(j)] = sample_rng.gaussian();
        prod[size_t(j)] *= z[size_t(j)];
      }
      const auto& enc = encode[size_t(m)];
      double* dst = tokens[size_t(m)].data() +
                    s * spec.seq_len * spec.input_dim;
      for (int64_t t = 0; t < spec.seq_len; ++t)
        for (int64_t i = 0; i < spec.input_dim; ++i) {
          double v = 0.0;
          for (int64_t j = 0; j < spec.latent_dim; ++j)
            v += enc[size_t(i * spec.latent_dim + j)] * z[size_t(j)];
          dst[t * spec.input_dim + i] = v + spec.noise * sample_rng.gaussian();
        }
    }
    double* ty = targets.data() + s * target_size;
    for (int64_t i = 0; i < target_size; ++i) {
      double v = 0.0;
      for (int64_t j = 0; j < spec.latent_dim; ++j)
        v += readout[size_t(i * spec.latent_dim + j)] * prod[size_t(j)];
      ty[i] = v;
    }
  }

  const int64_t stride = spec.seq_len * spec.input_dim;
  for (int64_t m = 0; m < spec.modalities; ++m) {
    auto& buf = tokens[size_t(m)];
    std::vector<double> train(buf.begin(),
                              buf.begin() + spec.train_samples * stride);
    std::vector<double> test(buf.begin() + spec.train_samples * stride,
                             buf.end());
    data.train_inputs.push_back(Tensor::from_data(
        {spec.train_samples * spec.seq_len, spec.input_dim},
        std::move(train)));
    data.test_inputs.push_back(Tensor::from_data(
        {spec.test_samples * spec.seq_len, spec.input_dim}, std::move(test)));
  }
  std::vector<double> train_t(targets.begin(),
                              targets.begin() + spec.train_samples * target_size);
  std::vector<double> test_t(targets.begin() + spec.train_samples * target_size,
                             targets.end());
  data.train_targets = Tensor::from_data({spec.train_samples, target_size},
                                         std::move(train_t));
  data.test_targets =
      Tensor::from_data({spec.test_samples, target_size}, std::move(test_t));
  // keep label vectors sized for train_size()/test_size() accounting
  data.train_labels.assign(static_cast<size_t>(spec.train_samples), 0);
  data.test_labels.assign(static_cast<size_t>(spec.test_samples), 0);
  return data;
}

}  // namespace sen
