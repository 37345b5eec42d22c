#include "sen/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "sen/sha256.hpp"

namespace sen {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where,
                         std::vector<std::string>& violations) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key()))
      violations.push_back(where + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out,
                const std::string& where,
                std::vector<std::string>& violations) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    violations.push_back(where + "." + key + ": wrong type");
  }
}

EncoderConfig default_modality(const std::string& name, int64_t shared_dim) {
  EncoderConfig e;
  e.modality_name = name;
  e.shared_dim = shared_dim;
  return e;
}

}  // namespace

SENConfig::SENConfig() {
  modalities = {default_modality("video", shared_dim),
                default_modality("text", shared_dim),
                default_modality("depth", shared_dim)};
}

SENConfig SENConfig::from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: document must be an object");

  std::vector<std::string> violations;
  SENConfig cfg;

  reject_unknown_keys(doc,
                      {"seed", "shared_dim", "modalities", "ra", "training",
                       "task"},
                      "config", violations);
  read_field(doc, "seed", cfg.seed, "config", violations);
  read_field(doc, "shared_dim", cfg.shared_dim, "config", violations);

  if (doc.contains("modalities")) {
    if (!doc["modalities"].is_array()) {
      violations.push_back("config.modalities: must be an array");
    } else {
      cfg.modalities.clear();
      int64_t idx = 0;
      for (const auto& m : doc["modalities"]) {
        const std::string where =
            "config.modalities[" + std::to_string(idx) + "]";
        if (!m.is_object()) {
          violations.push_back(where + ": must be an object");
          ++idx;
          continue;
        }
        reject_unknown_keys(m,
                            {"name", "input_dim", "seq_len", "depth", "heads",
                             "max_prompt_tokens", "mlp_ratio"},
                            where, violations);
        EncoderConfig e = default_modality("modality_" + std::to_string(idx),
                                           cfg.shared_dim);
        read_field(m, "name", e.modality_name, where, violations);
        read_field(m, "input_dim", e.input_dim, where, violations);
        read_field(m, "seq_len", e.seq_len, where, violations);
        read_field(m, "depth", e.depth, where, violations);
        read_field(m, "heads", e.heads, where, violations);
        read_field(m, "max_prompt_tokens", e.max_prompt_tokens, where,
                   violations);
        read_field(m, "mlp_ratio", e.mlp_ratio, where, violations);
        cfg.modalities.push_back(std::move(e));
        ++idx;
      }
    }
  }
  // modality shared_dim always follows the top-level shared_dim
  for (auto& e : cfg.modalities) e.shared_dim = cfg.shared_dim;

  if (doc.contains("ra")) {
    const auto& r = doc["ra"];
    const std::string where = "config.ra";
    if (!r.is_object()) {
      violations.push_back(where + ": must be an object");
    } else {
      reject_unknown_keys(r,
                          {"layers", "fusion", "distribution", "prompt_tokens",
                           "learnable_prompt", "passes_mode"},
                          where, violations);
      read_field(r, "layers", cfg.ra.layers, where, violations);
      if (r.contains("fusion")) {
        try {
          cfg.ra.fusion = fusion_kind_from_string(r["fusion"].get<std::string>());
        } catch (const std::exception& e) {
          violations.push_back(where + ".fusion: " + e.what());
        }
      }
      if (r.contains("distribution")) {
        std::string s;
        read_field(r, "distribution", s, where, violations);
        if (s == "sparse")
          cfg.ra.sparse = true;
        else if (s == "dense")
          cfg.ra.sparse = false;
        else if (!s.empty())
          violations.push_back(where + ".distribution: expected sparse|dense, got '" +
                               s + "'");
      }
      read_field(r, "prompt_tokens", cfg.ra.prompt_tokens, where, violations);
      read_field(r, "learnable_prompt", cfg.ra.learnable_prompt, where,
                 violations);
      if (r.contains("passes_mode")) {
        std::string s;
        read_field(r, "passes_mode", s, where, violations);
        if (s == "l_plus_1")
          cfg.ra.passes_l_plus_1 = true;
        else if (s == "l")
          cfg.ra.passes_l_plus_1 = false;
        else if (!s.empty())
          violations.push_back(where + ".passes_mode: expected l_plus_1|l, got '" +
                               s + "'");
      }
    }
  }

  if (doc.contains("training")) {
    const auto& t = doc["training"];
    const std::string where = "config.training";
    if (!t.is_object()) {
      violations.push_back(where + ": must be an object");
    } else {
      reject_unknown_keys(t,
                          {"arm", "base_lr", "beta1", "beta2", "weight_decay",
                           "steps", "batch", "schedule", "eval_interval"},
                          where, violations);
      if (t.contains("arm")) {
        try {
          cfg.training.arm = arm_kind_from_string(t["arm"].get<std::string>());
        } catch (const std::exception& e) {
          violations.push_back(where + ".arm: " + e.what());
        }
      }
      read_field(t, "base_lr", cfg.training.base_lr, where, violations);
      read_field(t, "beta1", cfg.training.beta1, where, violations);
      read_field(t, "beta2", cfg.training.beta2, where, violations);
      read_field(t, "weight_decay", cfg.training.weight_decay, where,
                 violations);
      read_field(t, "steps", cfg.training.steps, where, violations);
      read_field(t, "batch", cfg.training.batch, where, violations);
      if (t.contains("schedule")) {
        std::string s;
        read_field(t, "schedule", s, where, violations);
        if (s == "cosine")
          cfg.training.cosine_schedule = true;
        else if (s == "constant")
          cfg.training.cosine_schedule = false;
        else if (!s.empty())
          violations.push_back(where + ".schedule: expected cosine|constant, got '" +
                               s + "'");
      }
      read_field(t, "eval_interval", cfg.training.eval_interval, where,
                 violations);
    }
  }

  if (doc.contains("task")) {
    const auto& t = doc["task"];
    const std::string where = "config.task";
    if (!t.is_object()) {
      violations.push_back(where + ": must be an object");
    } else {
      reject_unknown_keys(t,
                          {"kind", "noise", "train_samples", "test_samples",
                           "pattern_scale", "classes", "latent_dim",
                           "target_shape", "active_modalities"},
                          where, violations);
      if (t.contains("kind")) {
        try {
          cfg.task.kind = task_kind_from_string(t["kind"].get<std::string>());
        } catch (const std::exception& e) {
          violations.push_back(where + ".kind: " + e.what());
        }
      }
      read_field(t, "noise", cfg.task.noise, where, violations);
      read_field(t, "train_samples", cfg.task.train_samples, where, violations);
      read_field(t, "test_samples", cfg.task.test_samples, where, violations);
      read_field(t, "pattern_scale", cfg.task.pattern_scale, where, violations);
      read_field(t, "classes", cfg.task.classes, where, violations);
      read_field(t, "latent_dim", cfg.task.latent_dim, where, violations);
      read_field(t, "target_shape", cfg.task.target_shape, where, violations);
      read_field(t, "active_modalities", cfg.task.active_modalities, where,
                 violations);
    }
  }

  cfg.validate(violations);
  if (!violations.empty()) {
    std::string msg = "config: " + std::to_string(violations.size()) +
                      " violation(s):";
    for (const auto& v : violations) msg += "\n  - " + v;
    throw ConfigError(msg);
  }
  return cfg;
}

SENConfig SENConfig::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

void SENConfig::validate(std::vector<std::string>& violations) const {
  if (shared_dim < 1)
    violations.push_back("config.shared_dim: must be >= 1");
  if (modalities.empty())
    violations.push_back("config.modalities: at least one modality required");
  for (size_t i = 0; i < modalities.size(); ++i) {
    // the top-level shared_dim is authoritative for every modality
    EncoderConfig m = modalities[i];
    m.shared_dim = shared_dim;
    m.validate(violations, "config.modalities[" + std::to_string(i) + "] ('" +
                               m.modality_name + "')");
  }
  if (ra.layers < 0) violations.push_back("config.ra.layers: must be >= 0");
  if (ra.prompt_tokens < 0)
    violations.push_back("config.ra.prompt_tokens: must be >= 0");
  for (const auto& m : modalities) {
    if (ra.prompt_tokens > m.max_prompt_tokens)
      violations.push_back("config.ra.prompt_tokens (" +
                           std::to_string(ra.prompt_tokens) +
                           ") exceeds max_prompt_tokens of '" +
                           m.modality_name + "' (" +
                           std::to_string(m.max_prompt_tokens) + ")");
  }
  if (training.base_lr <= 0)
    violations.push_back("config.training.base_lr: must be positive");
  if (training.steps < 0)
    violations.push_back("config.training.steps: must be >= 0");
  if (training.batch < 1)
    violations.push_back("config.training.batch: must be >= 1");
  if (training.eval_interval < 1)
    violations.push_back("config.training.eval_interval: must be >= 1");
  if (training.beta1 < 0 || training.beta1 >= 1)
    violations.push_back("config.training.beta1: must be in [0, 1)");
  if (training.beta2 < 0 || training.beta2 >= 1)
    violations.push_back("config.training.beta2: must be in [0, 1)");
  if (training.weight_decay < 0)
    violations.push_back("config.training.weight_decay: must be >= 0");
  if (task.noise < 0) violations.push_back("config.task.noise: must be >= 0");
  if (task.train_samples < 1)
    violations.push_back("config.task.train_samples: must be >= 1");
  if (task.test_samples < 1)
    violations.push_back("config.task.test_samples: must be >= 1");
  if (task.kind == TaskKind::parity && modalities.size() < 2)
    violations.push_back("config.task: parity needs at least 2 modalities");
  if (task.kind == TaskKind::contrastive) {
    if (task.classes < 2)
      violations.push_back("config.task.classes: must be >= 2");
    if (task.classes > shared_dim)
      violations.push_back("config.task.classes: orthonormal classes need "
                           "classes <= shared_dim");
  }
  if (task.kind == TaskKind::injection) {
    if (task.latent_dim < 1)
      violations.push_back("config.task.latent_dim: must be >= 1");
    if (task.target_shape.empty())
      violations.push_back("config.task.target_shape: must be non-empty");
    for (int64_t e : task.target_shape)
      if (e <= 0)
        violations.push_back(
            "config.task.target_shape: extents must be positive");
  }
  if (!task.active_modalities.empty()) {
    std::set<int64_t> seen;
    for (int64_t i : task.active_modalities) {
      if (i < 0 || size_t(i) >= modalities.size())
        violations.push_back("config.task.active_modalities: index " +
                             std::to_string(i) + " out of range");
      else if (!seen.insert(i).second)
        violations.push_back("config.task.active_modalities: duplicate index " +
                             std::to_string(i));
    }
  }
  // cross-field: contrastive tokens carry shared_dim-wide features
  if (task.kind == TaskKind::contrastive) {
    for (const auto& m : modalities)
      if (m.input_dim != shared_dim)
        violations.push_back("config.task: contrastive requires input_dim == "
                             "shared_dim for modality '" +
                             m.modality_name + "'");
  }
  // the generators emit homogeneous streams
  for (const auto& m : modalities) {
    if (m.input_dim != modalities[0].input_dim ||
        m.seq_len != modalities[0].seq_len) {
      violations.push_back("config.task: synthetic tasks require identical "
                           "input_dim and seq_len across modalities");
      break;
    }
  }
}

void SENConfig::validate_or_throw() const {
  std::vector<std::string> v;
  validate(v);
  if (!v.empty()) {
    std::string msg = "config: " + std::to_string(v.size()) + " violation(s):";
    for (const auto& s : v) msg += "\n  - " + s;
    throw ConfigError(msg);
  }
}

std::string SENConfig::to_json_text() const {
  ordered_json doc;
  doc["seed"] = seed;
  doc["shared_dim"] = shared_dim;
  doc["modalities"] = ordered_json::array();
  for (const auto& m : modalities) {
    ordered_json e;
    e["name"] = m.modality_name;
    e["input_dim"] = m.input_dim;
    e["seq_len"] = m.seq_len;
    e["depth"] = m.depth;
    e["heads"] = m.heads;
    e["max_prompt_tokens"] = m.max_prompt_tokens;
    e["mlp_ratio"] = m.mlp_ratio;
    doc["modalities"].push_back(e);
  }
  doc["ra"] = {{"layers", ra.layers},
               {"fusion", to_string(ra.fusion)},
               {"distribution", ra.sparse ? "sparse" : "dense"},
               {"prompt_tokens", ra.prompt_tokens},
               {"learnable_prompt", ra.learnable_prompt},
               {"passes_mode", ra.passes_l_plus_1 ? "l_plus_1" : "l"}};
  doc["training"] = {{"arm", to_string(training.arm)},
                     {"base_lr", training.base_lr},
                     {"beta1", training.beta1},
                     {"beta2", training.beta2},
                     {"weight_decay", training.weight_decay},
                     {"steps", training.steps},
                     {"batch", training.batch},
                     {"schedule",
                      training.cosine_schedule ? "cosine" : "constant"},
                     {"eval_interval", training.eval_interval}};
  ordered_json t;
  t["kind"] = to_string(task.kind);
  t["noise"] = task.noise;
  t["train_samples"] = task.train_samples;
  t["test_samples"] = task.test_samples;
  t["pattern_scale"] = task.pattern_scale;
  t["classes"] = task.classes;
  t["latent_dim"] = task.latent_dim;
  t["target_shape"] = task.target_shape;
  t["active_modalities"] = task.active_modalities;
  doc["task"] = t;
  return doc.dump();
}

std::string SENConfig::digest() const { return Sha256::hash_hex(to_json_text()); }

std::vector<int64_t> SENConfig::active_modalities() const {
  if (!task.active_modalities.empty()) return task.active_modalities;
  std::vector<int64_t> all(modalities.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = int64_t(i);
  return all;
}

SenSpec SENConfig::build_spec() const {
  validate_or_throw();
  SenSpec spec;
  for (int64_t m : active_modalities()) {
    EncoderConfig e = modalities[size_t(m)];
    e.shared_dim = shared_dim;
    spec.encoders.push_back(std::move(e));
    spec.encoder_seeds.push_back(derive_seed(seed, 0x100 + uint64_t(m)));
  }
  spec.ra_layers = ra.layers;
  spec.fusion = ra.fusion;
  spec.sparse = ra.sparse;
  spec.prompt_tokens = ra.prompt_tokens;
  spec.learnable_prompt = ra.learnable_prompt;
  spec.passes_l_plus_1 = ra.passes_l_plus_1;
  spec.arm = training.arm;
  return spec;
}

TaskData SENConfig::build_task() const {
  validate_or_throw();
  const uint64_t task_seed = derive_seed(seed, 0x500);
  switch (task.kind) {
    case TaskKind::parity: {
      ParityTaskSpec s;
      s.modalities = int64_t(modalities.size());
      s.input_dim = modalities[0].input_dim;
      s.seq_len = modalities[0].seq_len;
      s.noise = task.noise;
      s.pattern_scale = task.pattern_scale;
      s.train_samples = task.train_samples;
      s.test_samples = task.test_samples;
      return gen_parity_task(s, task_seed);
    }
    case TaskKind::contrastive: {
      ContrastiveTaskSpec s;
      s.classes = task.classes;
      s.dim = shared_dim;
      s.seq_len = modalities[0].seq_len;
      s.noise = task.noise;
      s.train_samples = task.train_samples;
      s.test_samples = task.test_samples;
      s.modalities = int64_t(modalities.size());
      return gen_contrastive_task(s, task_seed);
    }
    case TaskKind::injection: {
      InjectionTaskSpec s;
      s.modalities = int64_t(modalities.size());
      s.input_dim = modalities[0].input_dim;
      s.seq_len = modalities[0].seq_len;
      s.latent_dim = task.latent_dim;
      s.target_shape = task.target_shape;
      s.noise = task.noise;
      s.train_samples = task.train_samples;
      s.test_samples = task.test_samples;
      return gen_injection_task(s, task_seed);
    }
  }
  throw ConfigError("config: unknown task kind");
}

}  // namespace sen
