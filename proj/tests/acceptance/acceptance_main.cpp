// Acceptance suite: one pass/fail line per criterion.
//
// Heavy trend criteria share a grid of training runs (4 depths, two
// distribution/prompt ablations, two reference arms, two modality
// restrictions, five seeds each). Finished runs are cached on disk keyed by
// the exact experiment config, so re-running the suite after a green pass is
// cheap. Delete the cache directory after touching any numerical code.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sen/adapters.hpp"
#include "sen/runner.hpp"
#include "sen/sha256.hpp"
#include "sen/tasks.hpp"

namespace fs = std::filesystem;
using namespace sen;
using Clock = std::chrono::steady_clock;

namespace {

constexpr int kCacheVersion = 1;
constexpr double kGradTol = 1e-4;

struct Criterion {
  Criterion(int id_, std::string name_) : id(id_), name(std::move(name_)) {}
  int id;
  std::string name;
  bool pass = false;
  std::vector<std::string> detail;
  double seconds = 0.0;
};

fs::path g_cache_dir;
int g_jobs = 2;

// ---- shared experiment grid ----

SENConfig desk_config(uint64_t seed) {
  SENConfig cfg;  // desk-scale defaults: d=16, M=3, k=4, L=3, 2000 steps
  cfg.seed = seed;
  return cfg;
}

struct GridJob {
  std::string label;
  SENConfig cfg;
  double final_metric = 0.0;
};

double run_one(const SENConfig& cfg) {
  Experiment exp(cfg);
  return exp.run(nullptr).final_metric;
}

void run_grid(std::vector<GridJob>& jobs) {
  // resolve from cache first
  std::vector<size_t> todo;
  for (size_t i = 0; i < jobs.size(); ++i) {
    const std::string key = Sha256::hash_hex(
        jobs[i].cfg.to_json_text() + "#v" + std::to_string(kCacheVersion));
    const fs::path file = g_cache_dir / (key + ".json");
    if (fs::exists(file)) {
      std::ifstream in(file);
      auto doc = nlohmann::json::parse(in);
      jobs[i].final_metric = doc.at("final_metric").get<double>();
    } else {
      todo.push_back(i);
    }
  }
  if (todo.empty()) return;

  std::atomic<size_t> next{0};
  std::mutex io_mutex;
  auto worker = [&] {
    while (true) {
      const size_t slot = next.fetch_add(1);
      if (slot >= todo.size()) return;
      GridJob& job = jobs[todo[slot]];
      const double metric = run_one(job.cfg);
      job.final_metric = metric;
      const std::string key = Sha256::hash_hex(
          job.cfg.to_json_text() + "#v" + std::to_string(kCacheVersion));
      nlohmann::ordered_json doc;
      doc["label"] = job.label;
      doc["seed"] = job.cfg.seed;
      doc["final_metric"] = metric;
      std::lock_guard<std::mutex> lock(io_mutex);
      std::ofstream(g_cache_dir / (key + ".json")) << doc.dump() << "\n";
      std::printf("  [grid] %-12s seed %llu -> %.4f\n", job.label.c_str(),
                  (unsigned long long)job.cfg.seed, metric);
      std::fflush(stdout);
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = std::max(1, std::min<int>(g_jobs, int(todo.size())));
  pool.reserve(size_t(n_threads));
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

// mean final accuracy over the five grid seeds for one arm label
std::map<std::string, double> grid_means(const std::vector<GridJob>& jobs) {
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& j : jobs) {
    acc[j.label].first += j.final_metric;
    acc[j.label].second += 1;
  }
  std::map<std::string, double> out;
  for (const auto& [label, pair] : acc)
    out[label] = pair.first / double(pair.second);
  return out;
}

const std::vector<GridJob>& trend_grid() {
  static std::vector<GridJob> jobs = [] {
    std::vector<GridJob> list;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
      for (int64_t layers : {1, 2, 3, 4}) {
        SENConfig cfg = desk_config(seed);
        cfg.ra.layers = layers;
        list.push_back({"ra_l" + std::to_string(layers), cfg});
      }
      {
        SENConfig cfg = desk_config(seed);
        cfg.ra.sparse = false;
        list.push_back({"dense_l3", cfg});
      }
      {
        SENConfig cfg = desk_config(seed);
        cfg.ra.learnable_prompt = false;
        list.push_back({"noq_l3", cfg});
      }
      {
        SENConfig cfg = desk_config(seed);
        cfg.training.arm = ArmKind::baseline;
        list.push_back({"baseline", cfg});
      }
      {
        SENConfig cfg = desk_config(seed);
        cfg.training.arm = ArmKind::pure;
        list.push_back({"pure", cfg});
      }
      {
        SENConfig cfg = desk_config(seed);
        cfg.task.active_modalities = {0};
        list.push_back({"mod1", cfg});
      }
      {
        SENConfig cfg = desk_config(seed);
        cfg.task.active_modalities = {0, 1};
        list.push_back({"mod12", cfg});
      }
    }
    run_grid(list);
    return list;
  }();
  return jobs;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// ---- criteria ----

Criterion criterion_1() {
  Criterion c{1, "gradient correctness (20-config gradcheck sweep)"};
  const auto t0 = Clock::now();
  auto sweep = gradcheck_sweep();
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  double worst = 0.0;
  for (const auto& e : sweep) worst = std::max(worst, e.result.max_rel_err);
  c.pass = sweep.size() == 20 && worst < kGradTol && secs < 120.0;
  c.detail.push_back("configs: " + std::to_string(sweep.size()) +
                     ", worst max_rel_err: " + fmt(worst) + " (< 1e-4), " +
                     fmt(secs) + "s (< 120s)");
  return c;
}

Criterion criterion_2() {
  Criterion c{2, "freeze invariant after a 500-step parity run"};
  SENConfig cfg = desk_config(1);
  cfg.training.steps = 500;
  Experiment exp(cfg);
  const std::string before = exp.sen().encoders_sha256();
  TrainOutcome out = exp.run(nullptr);
  const std::string after = exp.sen().encoders_sha256();
  bool optimizer_clean = true;
  for (int64_t m = 0; m < exp.sen().modalities(); ++m)
    for (const Tensor& p : exp.sen().neuron(m).parameters())
      optimizer_clean = optimizer_clean && !exp.optimizer().tracks(p);
  c.pass = before == after && out.encoder_hash_before == before &&
           optimizer_clean;
  c.detail.push_back("sha256(before) == sha256(after): " +
                     std::string(before == after ? "yes" : "NO") +
                     "; optimizer holds zero encoder entries: " +
                     (optimizer_clean ? "yes" : "NO"));
  return c;
}

Criterion criterion_3() {
  Criterion c{3, "parameter accounting matches closed forms; RA < transformer"};
  auto sweep = gradcheck_sweep();
  bool counts_ok = true, budget_ok = true;
  for (const auto& e : sweep) {
    if (e.trainable_count != e.closed_form_count) {
      counts_ok = false;
      c.detail.push_back("count mismatch at " + e.label + ": " +
                         std::to_string(e.trainable_count) +
                         " vs closed form " +
                         std::to_string(e.closed_form_count));
    }
    if (e.ra_layer_count >= e.transformer_layer_count) {
      budget_ok = false;
      c.detail.push_back("budget violated at " + e.label);
    }
  }
  // the headline desk shape too: d=16, k=4 per layer
  SENConfig cfg = desk_config(1);
  SEN sen(cfg.build_spec(), cfg.seed);
  const int64_t ra_layer =
      ra_layer_closed_form(3, 16, 4, FusionKind::avg, true, true);
  const int64_t tf_layer = sen.tf_layers()[0].trainable_count();
  budget_ok = budget_ok && ra_layer < tf_layer;
  c.pass = counts_ok && budget_ok;
  c.detail.push_back("all 20 closed forms match: " +
                     std::string(counts_ok ? "yes" : "NO") +
                     "; per-layer RA " + std::to_string(ra_layer) +
                     " < transformer " + std::to_string(tf_layer) + ": " +
                     (budget_ok ? "yes" : "NO"));
  return c;
}

Criterion criterion_4() {
  Criterion c{4, "fusion algebra identities hold exactly"};
  bool ok = true;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      c.detail.push_back("FAILED: " + what);
    }
  };

  // avg of identical vectors is that vector
  Tensor v = Tensor::from_data({1, 4}, {1.25, -3.5, 0.75, 2.0});
  std::vector<Tensor> same = {v, v, v};
  Tensor avg_same = integrate(same, FusionStrategy::make(FusionKind::avg, 4));
  expect(std::equal(avg_same.values().begin(), avg_same.values().end(),
                    v.values().begin()),
         "avg of identical vectors");

  // add == M * avg on exactly representable sums
  std::vector<Tensor> feats = {Tensor::from_data({1, 3}, {1, 2, -3}),
                               Tensor::from_data({1, 3}, {2, 4, -6}),
                               Tensor::from_data({1, 3}, {3, 6, 15})};
  Tensor added = integrate(feats, FusionStrategy::make(FusionKind::add, 3));
  Tensor tripled =
      scale(integrate(feats, FusionStrategy::make(FusionKind::avg, 3)), 3.0);
  expect(std::equal(added.values().begin(), added.values().end(),
                    tripled.values().begin()),
         "add == M*avg");

  // M=1 identity for every kind
  Rng rng(3);
  Tensor single = Tensor::randn({2, 6}, rng, 1.0);
  std::vector<Tensor> one = {single};
  for (FusionKind kind : {FusionKind::avg, FusionKind::add, FusionKind::concat,
                          FusionKind::attention, FusionKind::moe}) {
    Tensor fused = integrate(one, FusionStrategy::make(kind, 6));
    expect(std::equal(fused.values().begin(), fused.values().end(),
                      single.values().begin()),
           "M=1 identity for " + to_string(kind));
  }

  // concat order-sensitivity
  std::vector<Tensor> ab = {feats[0], feats[1]};
  std::vector<Tensor> ba = {feats[1], feats[0]};
  Tensor cat_ab = integrate(ab, FusionStrategy::make(FusionKind::concat, 3));
  Tensor cat_ba = integrate(ba, FusionStrategy::make(FusionKind::concat, 3));
  expect(!std::equal(cat_ab.values().begin(), cat_ab.values().end(),
                     cat_ba.values().begin()),
         "concat order-sensitivity");

  c.pass = ok;
  if (ok) c.detail.push_back("avg/add/M=1/concat identities all exact");
  return c;
}

Criterion criterion_5() {
  Criterion c{5, "trend: RA beats the no-RA baseline and the pure arm"};
  const auto t0 = Clock::now();
  auto means = grid_means(trend_grid());
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const double ra = means.at("ra_l3");
  const double base = means.at("baseline");
  const double pure = means.at("pure");
  // spec floors plus the frozen observed margins (observed: ra ~99.9 with
  // both reference arms ~50; generous slack keeps this robust)
  const bool floors = ra >= base + 5.0 && ra >= pure + 10.0;
  const bool frozen = ra >= 95.0 && ra >= base + 30.0 && ra >= pure + 30.0;
  c.pass = floors && frozen;
  c.detail.push_back("mean over 5 seeds: ra_l3 " + fmt(ra) + "%, baseline " +
                     fmt(base) + "%, pure " + fmt(pure) + "%");
  c.detail.push_back("floors: ra >= baseline+5 and ra >= pure+10: " +
                     std::string(floors ? "yes" : "NO") +
                     "; frozen margins (ra >= 95, lead >= 30): " +
                     (frozen ? "yes" : "NO"));
  c.detail.push_back("grid time consumed by this criterion: " + fmt(secs) +
                     "s");
  return c;
}

Criterion criterion_6() {
  Criterion c{6, "trend: accuracy non-decreasing in depth, converged at L=3"};
  auto means = grid_means(trend_grid());
  const double l1 = means.at("ra_l1"), l2 = means.at("ra_l2"),
               l3 = means.at("ra_l3"), l4 = means.at("ra_l4");
  const bool monotone = l2 >= l1 - 1.0 && l3 >= l2 - 1.0;
  const bool converged = std::abs(l4 - l3) <= 1.5;
  c.pass = monotone && converged;
  c.detail.push_back("L=1: " + fmt(l1) + "%, L=2: " + fmt(l2) + "%, L=3: " +
                     fmt(l3) + "%, L=4: " + fmt(l4) + "%");
  c.detail.push_back("non-decreasing within 1 pt: " +
                     std::string(monotone ? "yes" : "NO") +
                     "; |L4 - L3| <= 1.5: " + (converged ? "yes" : "NO"));
  return c;
}

Criterion criterion_7() {
  Criterion c{7, "trend: sparse >= dense and with-Q >= without-Q (0.5 pt)"};
  auto means = grid_means(trend_grid());
  const double sparse = means.at("ra_l3");
  const double dense = means.at("dense_l3");
  const double no_q = means.at("noq_l3");
  const bool dist_ok = sparse >= dense - 0.5;
  const bool prompt_ok = sparse >= no_q - 0.5;
  c.pass = dist_ok && prompt_ok;
  c.detail.push_back("sparse " + fmt(sparse) + "% vs dense " + fmt(dense) +
                     "%: " + (dist_ok ? "yes" : "NO"));
  c.detail.push_back("with-Q " + fmt(sparse) + "% vs without-Q " + fmt(no_q) +
                     "%: " + (prompt_ok ? "yes" : "NO"));
  return c;
}

Criterion criterion_8() {
  Criterion c{8, "zero-shot head: exact at sigma=0; matches brute force at 0.3"};
  // sigma = 0: every prediction must be correct, accuracy 100% exactly
  ContrastiveTaskSpec clean;
  clean.classes = 8;
  clean.dim = 16;
  clean.noise = 0.0;
  clean.train_samples = 1;
  clean.test_samples = 512;
  TaskData data = gen_contrastive_task(clean, 11);
  int64_t correct = 0;
  for (int64_t s = 0; s < data.test_size(); ++s) {
    Tensor v = reshape(slice(data.test_inputs[0], 0, s * clean.seq_len, 1),
                       {clean.dim});
    Tensor a = reshape(
        slice(data.test_inputs[size_t(data.modalities - 1)], 0,
              s * clean.seq_len, 1),
        {clean.dim});
    if (contrastive_predict(v, a, data.classes).class_index ==
        data.test_labels[size_t(s)])
      ++correct;
  }
  const bool exact = correct == data.test_size();

  // sigma = 0.3: per-sample predictions equal the brute-force matrix argmax
  ContrastiveTaskSpec noisy = clean;
  noisy.noise = 0.3;
  TaskData nd = gen_contrastive_task(noisy, 12);
  const int64_t n = nd.test_size(), d = clean.dim, cls = clean.classes;
  std::vector<double> vfeat(static_cast<size_t>(n * d));
  std::vector<double> afeat(static_cast<size_t>(n * d));
  for (int64_t s = 0; s < n; ++s)
    for (int64_t j = 0; j < d; ++j) {
      vfeat[size_t(s * d + j)] = nd.test_inputs[0].at({s * clean.seq_len, j});
      afeat[size_t(s * d + j)] =
          nd.test_inputs[size_t(nd.modalities - 1)].at({s * clean.seq_len, j});
    }
  Tensor videos = Tensor::from_data({n, d}, vfeat);
  Tensor audios = Tensor::from_data({n, d}, afeat);
  auto batch = contrastive_predict_batch(videos, audios, nd.classes);
  bool agree = true;
  for (int64_t s = 0; s < n && agree; ++s) {
    double best = -1e300;
    int64_t best_idx = 0;
    for (int64_t cc = 0; cc < cls; ++cc) {
      double vdot = 0, adot = 0, vn = 0, an = 0;
      for (int64_t j = 0; j < d; ++j) {
        const double vj = vfeat[size_t(s * d + j)];
        const double aj = afeat[size_t(s * d + j)];
        const double ej = nd.classes.matrix.at({cc, j});
        vdot += vj * ej;
        adot += aj * ej;
        vn += vj * vj;
        an += aj * aj;
      }
      const double score = vdot / std::sqrt(vn) + adot / std::sqrt(an);
      if (score > best) {
        best = score;
        best_idx = cc;
      }
    }
    Tensor v = reshape(slice(videos, 0, s, 1), {d});
    Tensor a = reshape(slice(audios, 0, s, 1), {d});
    agree = batch[size_t(s)] == best_idx &&
            contrastive_predict(v, a, nd.classes).class_index == best_idx;
  }
  c.pass = exact && agree;
  c.detail.push_back("sigma=0 accuracy: " + std::to_string(correct) + "/" +
                     std::to_string(data.test_size()) +
                     "; sigma=0.3 brute-force agreement on all samples: " +
                     (agree ? "yes" : "NO"));
  return c;
}

Criterion criterion_9() {
  Criterion c{9, "determinism and persistence (metrics, checkpoint, resume)"};
  SENConfig cfg = desk_config(3);
  cfg.training.steps = 120;
  cfg.training.eval_interval = 30;
  cfg.task.train_samples = 512;
  cfg.task.test_samples = 128;

  const fs::path dir = g_cache_dir / "criterion9";
  fs::create_directories(dir);
  auto read_file = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };

  // byte-identical metrics across two identical runs
  for (const char* name : {"m1.jsonl", "m2.jsonl"}) {
    fs::remove(dir / name);
    MetricsWriter w((dir / name).string());
    Experiment exp(cfg);
    exp.run(&w);
  }
  const bool metrics_identical =
      read_file(dir / "m1.jsonl") == read_file(dir / "m2.jsonl") &&
      !read_file(dir / "m1.jsonl").empty();

  // bitwise checkpoint round trip
  Experiment exp(cfg);
  exp.run(nullptr);
  exp.save_checkpoint((dir / "a.senc").string());
  Experiment reload(cfg);
  reload.load_checkpoint((dir / "a.senc").string());
  reload.save_checkpoint((dir / "b.senc").string());
  const bool ckpt_bitwise =
      read_file(dir / "a.senc") == read_file(dir / "b.senc");

  // resume reproduces the uninterrupted stream
  Experiment full(cfg);
  TrainOutcome full_out = full.run(nullptr);
  Experiment part(cfg);
  TrainOutcome part_out = part.run(nullptr, 60);
  part.save_checkpoint((dir / "mid.senc").string());
  Experiment resumed(cfg);
  resumed.load_checkpoint((dir / "mid.senc").string());
  TrainOutcome tail_out = resumed.run(nullptr);
  std::string stitched, reference;
  for (const auto& r : part_out.metrics) stitched += metric_row_json(r) + "\n";
  for (const auto& r : tail_out.metrics) stitched += metric_row_json(r) + "\n";
  for (const auto& r : full_out.metrics)
    reference += metric_row_json(r) + "\n";
  const bool resume_exact = stitched == reference;

  c.pass = metrics_identical && ckpt_bitwise && resume_exact;
  c.detail.push_back(std::string("metrics byte-identical: ") +
                     (metrics_identical ? "yes" : "NO") +
                     "; checkpoint bitwise: " + (ckpt_bitwise ? "yes" : "NO") +
                     "; resume exact: " + (resume_exact ? "yes" : "NO"));
  return c;
}

Criterion criterion_10() {
  Criterion c{10, "trend: accuracy non-decreasing in modality count"};
  auto means = grid_means(trend_grid());
  const double m1 = means.at("mod1");
  const double m12 = means.at("mod12");
  const double m123 = means.at("ra_l3");
  const bool ok = m12 >= m1 - 1.0 && m123 >= m12 - 1.0;
  c.pass = ok;
  c.detail.push_back("{1}: " + fmt(m1) + "%, {1,2}: " + fmt(m12) +
                     "%, {1,2,3}: " + fmt(m123) + "%");
  c.detail.push_back("non-decreasing within 1 pt: " +
                     std::string(ok ? "yes" : "NO") +
                     " (fewer than 3 modalities cannot beat chance on "
                     "3-bit parity)");
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  g_cache_dir = fs::path("acceptance_cache");
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      selected.push_back(std::atoi(argv[++i]));
    } else if (arg == "--cache" && i + 1 < argc) {
      g_cache_dir = argv[++i];
    } else if (arg == "--jobs" && i + 1 < argc) {
      g_jobs = std::max(1, std::atoi(argv[++i]));
    } else {
      std::fprintf(stderr,
                   "usage: %s [--criterion N]... [--cache DIR] [--jobs N]\n",
                   argv[0]);
      return 2;
    }
  }
  fs::create_directories(g_cache_dir);

  using Fn = Criterion (*)();
  const std::vector<Fn> all = {criterion_1, criterion_2, criterion_3,
                               criterion_4, criterion_5, criterion_6,
                               criterion_7, criterion_8, criterion_9,
                               criterion_10};
  bool ok = true;
  for (int id = 1; id <= 10; ++id) {
    if (!selected.empty() &&
        std::find(selected.begin(), selected.end(), id) == selected.end())
      continue;
    const auto t0 = Clock::now();
    Criterion c = all[size_t(id - 1)]();
    c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    ok = ok && c.pass;
    std::printf("[%s] criterion %2d: %s (%.1fs)\n", c.pass ? "PASS" : "FAIL",
                c.id, c.name.c_str(), c.seconds);
    for (const auto& line : c.detail) std::printf("        %s\n", line.c_str());
    std::fflush(stdout);
  }
  return ok ? 0 : 1;
}
