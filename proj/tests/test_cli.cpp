#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "vrfm/experiment.hpp"

namespace fs = std::filesystem;
using namespace vrfm;

namespace {

std::string vrfm_bin() {
  const char* bin = std::getenv("VRFM_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "VRFM_BIN must point at the vrfm binary");
  return bin;
}

int run(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE_MESSAGE(is.good(), ("missing file: " + p.string()).c_str());
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

const char* kTinyConfig = R"({
  "task": "synthetic_1d",
  "objective": "vrfm",
  "seeds": [5],
  "output_dir": "%OUT%",
  "model": {"hidden_dim": 12, "embed_dim": 6, "latent_dim": 2, "latent_hidden": 8,
             "decoder_layers": 2},
  "posterior": {"hidden_dim": 12, "embed_dim": 6},
  "train": {"iterations": 40, "batch_size": 32, "log_every": 10}
})";

fs::path write_tiny_config(const fs::path& dir) {
  fs::create_directories(dir);
  std::string text = kTinyConfig;
  const std::string key = "%OUT%";
  text.replace(text.find(key), key.size(), (dir / "out").string());
  const fs::path path = dir / "config.json";
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("--help exits 0, missing subcommand exits 2") {
  CHECK(run(vrfm_bin() + " --help") == 0);
  CHECK(run(vrfm_bin()) == 2);
  CHECK(run(vrfm_bin() + " evaluate") == 2);  // required flag missing
}

TEST_CASE("train writes the documented artifact set") {
  const fs::path dir = fs::temp_directory_path() / "vrfm_cli_train";
  fs::remove_all(dir);
  const fs::path cfg = write_tiny_config(dir);
  CHECK(run(vrfm_bin() + " train --config " + cfg.string()) == 0);
  const fs::path base = dir / "out" / "synthetic_1d" / "vrfm";
  CHECK(fs::exists(base / "config.resolved.json"));
  CHECK(fs::exists(base / "5" / "model.ckpt"));
  CHECK(fs::exists(base / "5" / "loss.csv"));

  const std::string loss = slurp(base / "5" / "loss.csv");
  CHECK(loss.rfind("iteration,recon,kl,total", 0) == 0);
}

TEST_CASE("repeated seeds give byte-identical checkpoints via the CLI") {
  const fs::path dir = fs::temp_directory_path() / "vrfm_cli_det";
  fs::remove_all(dir);
  const fs::path cfg = write_tiny_config(dir);
  REQUIRE(run(vrfm_bin() + " train --config " + cfg.string()) == 0);
  const fs::path ckpt = dir / "out" / "synthetic_1d" / "vrfm" / "5" / "model.ckpt";
  const std::string first = slurp(ckpt);
  REQUIRE(run(vrfm_bin() + " train --config " + cfg.string()) == 0);
  CHECK(slurp(ckpt) == first);
}

TEST_CASE("config schema violations exit 2 naming the key") {
  const fs::path dir = fs::temp_directory_path() / "vrfm_cli_badcfg";
  fs::create_directories(dir);
  const fs::path cfg = dir / "bad.json";
  std::ofstream(cfg) << R"({"task":"synthetic_1d","train":{"learning_rat":1}})";
  CHECK(run(vrfm_bin() + " train --config " + cfg.string()) == 2);
}

TEST_CASE("sample runs at 2 and 100 steps and reports nfe") {
  const fs::path dir = fs::temp_directory_path() / "vrfm_cli_sample";
  fs::remove_all(dir);
  const fs::path cfg = write_tiny_config(dir);
  REQUIRE(run(vrfm_bin() + " train --config " + cfg.string()) == 0);
  const fs::path ckpt = dir / "out" / "synthetic_1d" / "vrfm" / "5" / "model.ckpt";

  for (const int steps : {2, 100}) {
    const fs::path sdir = dir / ("s" + std::to_string(steps));
    const std::string cmd = vrfm_bin() + " sample --checkpoint " + ckpt.string() +
                            " --n 64 --steps " + std::to_string(steps) + " --output " +
                            sdir.string() + " --trajectories 5";
    CHECK(run(cmd) == 0);
    CHECK(fs::exists(sdir / "samples.csv"));
    CHECK(fs::exists(sdir / "trajectories.csv"));
  }

  const fs::path adir = dir / "adaptive";
  CHECK(run(vrfm_bin() + " sample --checkpoint " + ckpt.string() +
            " --n 16 --adaptive --output " + adir.string()) == 0);

  CHECK(run(vrfm_bin() + " sample --checkpoint " + (dir / "nope.ckpt").string() +
            " --n 4 --output " + (dir / "x").string()) == 3);
}

TEST_CASE("evaluate emits the fixed-header metric table with aggregates") {
  const fs::path dir = fs::temp_directory_path() / "vrfm_cli_eval";
  fs::remove_all(dir);
  const fs::path cfg = write_tiny_config(dir);
  REQUIRE(run(vrfm_bin() + " train --config " + cfg.string()) == 0);
  const fs::path ckpt = dir / "out" / "synthetic_1d" / "vrfm" / "5" / "model.ckpt";
  const fs::path csv = dir / "metrics.csv";
  const std::string cmd = vrfm_bin() + " evaluate --checkpoints " + ckpt.string() +
                          " --steps 2 5 --no-adaptive --n 256 --output " + csv.string();
  CHECK(run(cmd) == 0);
  const std::string text = slurp(csv);
  CHECK(text.rfind("method,steps,seed,true_ll,parzen_ll,wasserstein,nfe", 0) == 0);
  CHECK(text.find("vrfm,2,5,") != std::string::npos);
  CHECK(text.find("vrfm,2,mean,") != std::string::npos);
  CHECK(text.find("vrfm,5,std,") != std::string::npos);
}

TEST_CASE("ambiguity on a baseline checkpoint yields an all-zero std column") {
  const fs::path dir = fs::temp_directory_path() / "vrfm_cli_amb";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::string text = R"({
    "task": "synthetic_1d", "objective": "rfm", "seeds": [2], "output_dir": "%OUT%",
    "model": {"hidden_dim": 12, "embed_dim": 6, "decoder_layers": 2},
    "train": {"iterations": 30, "batch_size": 32},
    "ambiguity": {"n_per_bin": 16}
  })";
  const std::string key = "%OUT%";
  text.replace(text.find(key), key.size(), (dir / "out").string());
  const fs::path cfg = dir / "config.json";
  std::ofstream(cfg) << text;
  REQUIRE(run(vrfm_bin() + " train --config " + cfg.string()) == 0);
  const fs::path ckpt = dir / "out" / "synthetic_1d" / "rfm" / "2" / "model.ckpt";

  const fs::path adir = dir / "amb";
  CHECK(run(vrfm_bin() + " ambiguity --source " + ckpt.string() + " --output " +
            adir.string()) == 0);
  const std::string grid = slurp(adir / "ambiguity_model_rfm.csv");
  std::istringstream lines(grid);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "x,t,std,count,mask");
  while (std::getline(lines, line)) {
    const auto first = line.find(',');
    const auto second = line.find(',', first + 1);
    const auto third = line.find(',', second + 1);
    CHECK(line.substr(second + 1, third - second - 1) == "0");
  }
  CHECK(fs::exists(adir / "ambiguity_model_rfm.svg"));
}

TEST_CASE("VRFM_OUTPUT_ROOT overrides the configured output dir") {
  const fs::path dir = fs::temp_directory_path() / "vrfm_cli_envroot";
  fs::remove_all(dir);
  const fs::path cfg = write_tiny_config(dir);
  const fs::path redirected = dir / "redirected";
  const std::string cmd = "VRFM_OUTPUT_ROOT=" + redirected.string() + " " + vrfm_bin() +
                          " train --config " + cfg.string();
  CHECK(run(cmd) == 0);
  CHECK(fs::exists(redirected / "synthetic_1d" / "vrfm" / "5" / "model.ckpt"));
  CHECK_FALSE(fs::exists(dir / "out" / "synthetic_1d" / "vrfm" / "5" / "model.ckpt"));
}

TEST_SUITE_END();
