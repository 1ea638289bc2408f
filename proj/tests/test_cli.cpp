#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int code = -1;
  std::string output;  // stdout and stderr combined
};

CmdResult run_cli(const std::string& args) {
  std::string command = std::string(DMT_CLI_PATH) + " " + args + " 2>&1";
  CmdResult result;
  FILE* pipe = popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buffer[1024];
  while (size_t got = std::fread(buffer, 1, sizeof(buffer), pipe))
    result.output.append(buffer, got);
  int status = pclose(pipe);
  result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "dmt_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

fs::path write_config(const std::string& filename, const std::string& body) {
  fs::path p = work_dir() / filename;
  std::ofstream out(p);
  out << body;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// tiny single-layer setup so every stage finishes in seconds; one layer also
// keeps the analyze stage correlation-free (single gate per kind)
const char* kTinyConfig =
    "task = copy\n"
    "train_size = 48\n"
    "test_size = 6\n"
    "vocab_size = 32\n"
    "symbols = 12\n"
    "min_sent_len = 2\n"
    "max_sent_len = 5\n"
    "num_layers = 1\n"
    "d_model = 16\n"
    "num_heads = 2\n"
    "d_ff = 32\n"
    "steps = 40\n"
    "warmup_steps = 20\n"
    "max_tokens = 256\n"
    "log_every = 10\n"
    "epochs = 1\n"
    "groups = 2\n"
    "beam_size = 2\n"
    "seed = 3\n";

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run_cli("").code == 2);
  CHECK(run_cli("pretrain").code == 2);  // --config is required
  CHECK(run_cli("pretrain --config /nonexistent/none.cfg").code == 2);
  CHECK(run_cli("pretrain --bogus-flag 1").code == 2);
  CHECK(run_cli("transmogrify").code == 2);
}

TEST_CASE("config errors name the offending key and exit 2") {
  fs::path bad_key = write_config("bad_key.cfg", "task = copy\nlayerz = 2\n");
  CmdResult r = run_cli("pretrain --config " + bad_key.string());
  CHECK(r.code == 2);
  CHECK(r.output.find("layerz") != std::string::npos);

  fs::path bad_value = write_config("bad_value.cfg", "steps = soon\n");
  CmdResult v = run_cli("pretrain --config " + bad_value.string());
  CHECK(v.code == 2);
  CHECK(v.output.find("steps") != std::string::npos);

  fs::path bad_task = write_config("bad_task.cfg", "task = osmosis\n");
  CHECK(run_cli("pretrain --config " + bad_task.string()).code == 2);
}

TEST_CASE("stages demand their upstream artifacts") {
  fs::path cfg = write_config("orphan.cfg", kTinyConfig);
  fs::path out = work_dir() / "orphan_out";
  fs::create_directories(out);

  CmdResult ft = run_cli("finetune --config " + cfg.string() + " --out " + out.string());
  CHECK(ft.code == 2);
  CHECK(ft.output.find("producing command") != std::string::npos);

  CHECK(run_cli("generate --config " + cfg.string() + " --out " + out.string()).code == 2);
  CHECK(run_cli("evaluate --config " + cfg.string() + " --out " + out.string()).code == 2);
  CHECK(run_cli("analyze --config " + cfg.string() + " --out " + out.string()).code == 2);
}

TEST_CASE("full pipeline produces every artifact deterministically") {
  fs::path cfg = write_config("pipe.cfg", kTinyConfig);
  fs::path out = work_dir() / "pipe_out";
  std::string common = " --config " + cfg.string() + " --out " + out.string();

  // pretrain
  CmdResult pre = run_cli("pretrain" + common);
  CAPTURE(pre.output);
  REQUIRE(pre.code == 0);
  REQUIRE(fs::exists(out / "pipe.dmt1"));
  REQUIRE(fs::exists(out / "pipe.vocab"));
  REQUIRE(fs::exists(out / "pipe.train.csv"));
  REQUIRE(fs::exists(out / "pipe.src.txt"));
  REQUIRE(fs::exists(out / "pipe.ref.txt"));

  std::string train_csv = slurp(out / "pipe.train.csv");
  CHECK(train_csv.find("# seed=3") != std::string::npos);
  CHECK(train_csv.find("step,loss") != std::string::npos);

  // pretraining again reproduces the checkpoint byte for byte
  std::string ck_bytes = slurp(out / "pipe.dmt1");
  CmdResult pre2 = run_cli("pretrain" + common);
  REQUIRE(pre2.code == 0);
  CHECK(slurp(out / "pipe.dmt1") == ck_bytes);

  // finetune
  CmdResult ft = run_cli("finetune" + common);
  CAPTURE(ft.output);
  REQUIRE(ft.code == 0);
  REQUIRE(fs::exists(out / "pipe.ft.dmt1"));
  REQUIRE(fs::exists(out / "pipe.ft.csv"));
  std::string ft_csv = slurp(out / "pipe.ft.csv");
  CHECK(ft_csv.find("epoch,nll,kl,mean_p_") != std::string::npos);

  // generate
  CmdResult gen = run_cli("generate" + common);
  CAPTURE(gen.output);
  REQUIRE(gen.code == 0);
  REQUIRE(fs::exists(out / "pipe.group1.txt"));
  REQUIRE(fs::exists(out / "pipe.group2.txt"));
  REQUIRE(fs::exists(out / "pipe.manifest.jsonl"));

  // one line per held-out sentence, no config echo inside group files
  std::istringstream group1(slurp(out / "pipe.group1.txt"));
  int lines = 0;
  std::string line;
  while (std::getline(group1, line)) {
    CHECK(line.find('#') == std::string::npos);
    ++lines;
  }
  CHECK(lines == 6);

  std::istringstream manifest(slurp(out / "pipe.manifest.jsonl"));
  int manifest_lines = 0;
  while (std::getline(manifest, line)) {
    auto row = nlohmann::json::parse(line);
    CHECK(row.contains("g"));
    CHECK(row.contains("seed"));
    CHECK(row.contains("beam_size"));
    ++manifest_lines;
  }
  CHECK(manifest_lines == 2);

  // regenerating yields byte-identical groups
  std::string g1 = slurp(out / "pipe.group1.txt");
  REQUIRE(run_cli("generate" + common).code == 0);
  CHECK(slurp(out / "pipe.group1.txt") == g1);

  // evaluate
  CmdResult ev = run_cli("evaluate" + common);
  CAPTURE(ev.output);
  REQUIRE(ev.code == 0);
  auto metrics = nlohmann::json::parse(slurp(out / "pipe.metrics.json"));
  REQUIRE(metrics.contains("bleu"));
  REQUIRE(metrics.contains("pairwise_bleu"));
  CHECK(metrics["groups"].get<int>() == 2);
  CHECK(metrics["per_group"].size() == 2);
  CHECK(metrics["bleu"].get<double>() >= 0.0);
  CHECK(metrics["bleu"].get<double>() <= 100.0);
  CHECK(metrics["pairwise_bleu"].get<double>() >= 0.0);
  CHECK(metrics["pairwise_bleu"].get<double>() <= 100.0);
  CHECK(metrics.contains("config"));

  // analyze
  CmdResult an = run_cli("analyze" + common);
  CAPTURE(an.output);
  REQUIRE(an.code == 0);
  REQUIRE(fs::exists(out / "pipe.analysis.txt"));
  REQUIRE(fs::exists(out / "pipe.analysis.csv"));
  std::string analysis = slurp(out / "pipe.analysis.txt");
  CHECK(analysis.find("baseline_bleu") != std::string::npos);
  // the single-layer model leaves every kind with one gate: no correlations
  CHECK(analysis.find("correlation omitted") != std::string::npos);
  std::string csv = slurp(out / "pipe.analysis.csv");
  CHECK(csv.find("kind,layer,mean_p,pruned_bleu") != std::string::npos);
  CHECK(csv.find("enc-self-attn,1,") != std::string::npos);
}

TEST_CASE("sweep emits the exact CSV contract") {
  fs::path cfg = write_config("sweepy.cfg", kTinyConfig);
  fs::path out = work_dir() / "sweep_out";
  std::string common = " --config " + cfg.string() + " --out " + out.string();

  REQUIRE(run_cli("pretrain" + common).code == 0);

  // fewer than two points is a usage error
  CHECK(run_cli("sweep" + common).code == 2);

  CmdResult sw = run_cli("sweep" + common + " --l2 10,1000");
  CAPTURE(sw.output);
  REQUIRE(sw.code == 0);
  REQUIRE(fs::exists(out / "sweepy.sweep.csv"));

  std::istringstream csv(slurp(out / "sweepy.sweep.csv"));
  std::string line;
  bool saw_header = false;
  std::vector<std::string> rows;
  while (std::getline(csv, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      CHECK(line == "selection,l2,bleu,pairwise_bleu");
      saw_header = true;
      continue;
    }
    rows.push_back(line);
  }
  CHECK(saw_header);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].rfind("encdec,10,", 0) == 0);
  CHECK(rows[1].rfind("encdec,1000,", 0) == 0);
}

TEST_CASE("seed flag overrides the config") {
  fs::path cfg = write_config("seeded.cfg", kTinyConfig);
  fs::path out = work_dir() / "seed_out";
  CmdResult r = run_cli("pretrain --config " + cfg.string() + " --out " +
                        out.string() + " --seed 17");
  REQUIRE(r.code == 0);
  std::string train_csv = slurp(out / "seeded.train.csv");
  CHECK(train_csv.find("# seed=17") != std::string::npos);
}
