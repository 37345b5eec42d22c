#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sen/checkpoint.hpp"
#include "sen/config.hpp"
#include "sen/network.hpp"
#include "sen/training.hpp"

namespace sen {

struct TrainOutcome {
  std::vector<MetricRow> metrics;
  double final_metric = 0.0;  // test accuracy in % (parity/contrastive), mse (injection)
  std::string encoder_hash_before;
  std::string encoder_hash_after;
  int64_t steps_run = 0;
};

// One configured run: task data, frozen encoders, the active arm's trainable
// state and its task head, with an AdamW loop over exactly those tensors.
// (config, seed) fully determines the metrics history.
class Experiment {
 public:
  explicit Experiment(SENConfig cfg);

  // Runs steps (current, stop] where stop defaults to the configured total;
  // streams metric rows to `writer` when given.
  TrainOutcome run(MetricsWriter* writer = nullptr, int64_t stop_after = -1);

  double evaluate();                 // test metric at the current parameters
  std::string metric_name() const;  // "test_accuracy" | "test_mse"

  void save_checkpoint(const std::string& path,
                       CheckpointDtype dtype = CheckpointDtype::f64) const;
  void load_checkpoint(const std::string& path);

  const SENConfig& config() const { return cfg_; }
  SEN& sen() { return *sen_; }
  const SEN& sen() const { return *sen_; }
  AdamW& optimizer() { return *opt_; }
  int64_t current_step() const { return step_; }
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  int64_t head_parameter_count() const;

 private:
  struct ModalCache {
    // constants per dataset split; row strides in doubles
    std::vector<double> embedded;  // [N, seq_len*d] (ra/transformer arms)
    std::vector<double> finals;    // [N, d] (pure/baseline arms)
    std::vector<double> pass1;     // [N, d] (ra/transformer arms)
  };

  void build_heads();
  void build_caches();
  void cache_split(std::span<const Tensor> inputs, int64_t n,
                   std::vector<ModalCache>& out);
  Tensor gather_rows(const std::vector<double>& cache, int64_t row_width,
                     std::span<const int64_t> rows) const;
  SEN::ForwardResult batch_forward(const std::vector<ModalCache>& caches,
                                   std::span<const int64_t> rows);
  Tensor batch_loss(const SEN::ForwardResult& fwd,
                    std::span<const int64_t> rows, bool train_split);

  SENConfig cfg_;
  TaskData task_;
  std::unique_ptr<SEN> sen_;
  std::vector<Tensor> head_params_;
  std::vector<std::string> head_names_;
  std::unique_ptr<AdamW> opt_;
  std::vector<ModalCache> train_cache_, test_cache_;
  int64_t step_ = 0;
  bool needs_live_forward_ = false;  // ra / transformer arms
};

// Canonical gradient-check losses over a freshly built SEN with all
// trainable tensors moved to a generic random point.
GradCheckResult sen_gradcheck(const SENConfig& cfg);

struct GradCheckSweepEntry {
  std::string label;
  GradCheckResult result;
  int64_t trainable_count = 0;
  int64_t closed_form_count = 0;
  int64_t transformer_layer_count = 0;
  int64_t ra_layer_count = 0;
};

// The 20-point sweep: every fusion kind x sparse/dense x prompts on/off at
// M=3, d=8, k=2, L=2.
std::vector<GradCheckSweepEntry> gradcheck_sweep();

// Closed-form trainable count of one RA layer, kept independent from the
// reflection-based counting for tests.
int64_t ra_layer_closed_form(int64_t modalities, int64_t d, int64_t k,
                             FusionKind fusion, bool sparse,
                             bool learnable_prompt);

}  // namespace sen
