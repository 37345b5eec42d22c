#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#ifndef SEN_CLI_PATH
#define SEN_CLI_PATH "sen"
#endif

namespace fs = std::filesystem;

namespace {

struct CliTempDir {
  fs::path path;
  CliTempDir() {
    path = fs::temp_directory_path() /
           ("sen_cli_" + std::to_string(uint64_t(::getpid()) * 31 +
                                        uint64_t(std::rand())));
    fs::create_directories(path);
  }
  ~CliTempDir() { fs::remove_all(path); }
};

int run_cli(const std::string& args, const fs::path& dir,
            std::string* output = nullptr) {
  const fs::path out_file = dir / "cli_output.txt";
  const std::string cmd = std::string(SEN_CLI_PATH) + " " + args + " > " +
                          out_file.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) {
    std::ifstream in(out_file);
    output->assign((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  }
  return status == -1 ? -1 : WEXITSTATUS(status);
}

// fast config shared by the CLI smoke tests
const char* kQuickConfig = R"({
  "seed": 4,
  "shared_dim": 8,
  "modalities": [
    {"name": "video", "input_dim": 6, "seq_len": 4, "depth": 1, "heads": 2, "max_prompt_tokens": 4},
    {"name": "text",  "input_dim": 6, "seq_len": 4, "depth": 1, "heads": 2, "max_prompt_tokens": 4},
    {"name": "depth", "input_dim": 6, "seq_len": 4, "depth": 1, "heads": 2, "max_prompt_tokens": 4}
  ],
  "ra": {"layers": 1, "prompt_tokens": 2},
  "training": {"steps": 12, "batch": 8, "eval_interval": 6},
  "task": {"train_samples": 64, "test_samples": 32}
})";

fs::path write_quick_config(const CliTempDir& tmp) {
  const fs::path p = tmp.path / "config.json";
  std::ofstream(p) << kQuickConfig;
  return p;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("params prints counts consistent with the library") {
  CliTempDir tmp;
  const fs::path cfg = write_quick_config(tmp);
  std::string output;
  const int rc = run_cli("params --config " + cfg.string(), tmp.path, &output);
  REQUIRE(rc == 0);
  auto obj = nlohmann::json::parse(output);
  // RA layer at d=8, k=2, M=3, avg/sparse + prompts
  const int64_t per_mlp = 8 * 8 + 8 + 8 * 16 + 16;
  CHECK(obj["trainable"].get<int64_t>() == 3 * per_mlp + 3 * 2 * 8);
  CHECK(obj["frozen"].get<int64_t>() > 0);
  CHECK(obj["task_head"].get<int64_t>() == 8 * 2 + 2);
}

TEST_CASE("gradcheck exits zero on a healthy config") {
  CliTempDir tmp;
  const fs::path cfg = write_quick_config(tmp);
  std::string output;
  const int rc = run_cli("gradcheck --config " + cfg.string(), tmp.path,
                         &output);
  CHECK(rc == 0);
  CHECK(output.find("max_rel_err") != std::string::npos);
}

TEST_CASE("train writes metrics and a checkpoint; eval reloads it") {
  CliTempDir tmp;
  const fs::path cfg = write_quick_config(tmp);
  const fs::path out = tmp.path / "run";
  std::string output;
  int rc = run_cli("train --config " + cfg.string() + " --out " + out.string(),
                   tmp.path, &output);
  REQUIRE(rc == 0);
  CHECK(fs::exists(out / "metrics.jsonl"));
  CHECK(fs::exists(out / "checkpoint.senc"));

  rc = run_cli("eval --config " + cfg.string() + " --ckpt " +
                   (out / "checkpoint.senc").string(),
               tmp.path, &output);
  REQUIRE(rc == 0);
  auto obj = nlohmann::json::parse(output);
  CHECK(obj["step"].get<int64_t>() == 12);
  CHECK(obj.contains("test_accuracy"));
}

TEST_CASE("seed flag overrides the config seed") {
  CliTempDir tmp;
  const fs::path cfg = write_quick_config(tmp);
  std::string a, b;
  run_cli("train --config " + cfg.string() + " --seed 21 --out " +
              (tmp.path / "a").string(),
          tmp.path, &a);
  run_cli("train --config " + cfg.string() + " --seed 22 --out " +
              (tmp.path / "b").string(),
          tmp.path, &b);
  std::ifstream ma(tmp.path / "a" / "metrics.jsonl");
  std::string first_a, first_b;
  std::getline(ma, first_a);
  std::ifstream mb(tmp.path / "b" / "metrics.jsonl");
  std::getline(mb, first_b);
  CHECK(nlohmann::json::parse(first_a)["seed"] == 21);
  CHECK(nlohmann::json::parse(first_b)["seed"] == 22);
}

TEST_CASE("ablate depth emits one row per L in {1,2,3,4}") {
  CliTempDir tmp;
  const fs::path cfg = write_quick_config(tmp);
  const fs::path out = tmp.path / "ablate";
  std::string output;
  const int rc = run_cli("ablate --axis depth --config " + cfg.string() +
                             " --out " + out.string(),
                         tmp.path, &output);
  REQUIRE(rc == 0);
  std::ifstream rows(out / "ablate_depth.jsonl");
  std::string line;
  std::set<std::string> arms;
  while (std::getline(rows, line))
    arms.insert(nlohmann::json::parse(line)["arm"].get<std::string>());
  CHECK(arms == std::set<std::string>{"depth_1", "depth_2", "depth_3",
                                      "depth_4"});
}

TEST_CASE("ablate modality restricts the model to prefixes of the streams") {
  CliTempDir tmp;
  const fs::path cfg = write_quick_config(tmp);
  const fs::path out = tmp.path / "ablate_m";
  std::string output;
  const int rc = run_cli("ablate --axis modality --config " + cfg.string() +
                             " --out " + out.string(),
                         tmp.path, &output);
  REQUIRE(rc == 0);
  std::ifstream rows(out / "ablate_modality.jsonl");
  std::string line;
  std::set<std::string> arms;
  while (std::getline(rows, line))
    arms.insert(nlohmann::json::parse(line)["arm"].get<std::string>());
  CHECK(arms == std::set<std::string>{"modalities_1", "modalities_2",
                                      "modalities_3"});
}

TEST_CASE("invalid configs exit nonzero with the violation text") {
  CliTempDir tmp;
  const fs::path cfg = tmp.path / "bad.json";
  std::ofstream(cfg) << R"({"shared_dim": -1, "oops": true})";
  std::string output;
  const int rc = run_cli("params --config " + cfg.string(), tmp.path, &output);
  CHECK(rc == 1);
  CHECK(output.find("oops") != std::string::npos);
  CHECK(output.find("shared_dim") != std::string::npos);
}

TEST_CASE("train --stop-at then --resume matches the uninterrupted metrics") {
  CliTempDir tmp;
  const fs::path cfg = write_quick_config(tmp);
  const fs::path full = tmp.path / "full";
  const fs::path part = tmp.path / "part";
  std::string output;
  REQUIRE(run_cli("train --config " + cfg.string() + " --out " + full.string(),
                  tmp.path, &output) == 0);
  REQUIRE(run_cli("train --config " + cfg.string() + " --out " +
                      part.string() + " --stop-at 6",
                  tmp.path, &output) == 0);
  REQUIRE(run_cli("train --config " + cfg.string() + " --out " +
                      part.string() + " --resume " +
                      (part / "checkpoint.senc").string(),
                  tmp.path, &output) == 0);
  // the metrics file was appended across the two segments
  std::ifstream fa(full / "metrics.jsonl"), fb(part / "metrics.jsonl");
  std::string sa((std::istreambuf_iterator<char>(fa)),
                 std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)),
                 std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

}  // TEST_SUITE
