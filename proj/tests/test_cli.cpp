#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "interflow/flowio.hpp"
#include "interflow/metrics.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "interflow_test_cli";
const std::string kSmall =
    " --set synthetic.sequences=3 --set synthetic.length=9 --set model.width_divisor=32"
    " --set augment.width=64 --set augment.height=32 --set pretrain.batch_size=4 --set finetune.batch_size=4";

int run(const std::string& args) {
  const std::string cmd = std::string(INTERFLOW_CLI) + " " + args + " 2>/dev/null >/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && line[0] != '#') ++n;
  return n;
}

int count_ext(const fs::path& dir, const std::string& ext) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

struct Once {
  Once() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
  }
};
const Once once;

}  // namespace

TEST_CASE("gen-synthetic is deterministic and refuses to overwrite") {
  const fs::path a = kRoot / "gen_a", b = kRoot / "gen_b";
  REQUIRE(run("gen-synthetic --seed 7 --out " + a.string() + kSmall) == 0);
  REQUIRE(run("gen-synthetic --seed 7 --out " + b.string() + kSmall) == 0);
  CHECK(count_lines(a / "manifest.tsv") == 3);
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    CHECK(read_file(e.path()) == read_file(b / fs::relative(e.path(), a)));
  }
  CHECK(run("gen-synthetic --seed 7 --out " + a.string() + kSmall) == 3);
  CHECK(run("gen-synthetic --seed 7 --force --out " + a.string() + kSmall) == 0);
}

TEST_CASE("zero-motion corpora have flat flow files") {
  const fs::path z = kRoot / "zero";
  REQUIRE(run("gen-synthetic --out " + z.string() + kSmall + " --set synthetic.velocity=0,0") == 0);
  const auto f = interflow::flowio::read_flo(z / "seq_0001" / "flow_0003.flo");
  for (float u : f.u) CHECK(u == 0.0f);
  for (float v : f.v) CHECK(v == 0.0f);
}

TEST_CASE("config errors map to their exit code") {
  CHECK(run("pretrain --out " + (kRoot / "bad").string() + " --set nope=1") == 3);
  CHECK(run("pretrain --out " + (kRoot / "bad2").string() + " --device cuda") == 3);
  CHECK(run("pretrain --bogus-flag") == 2);
  CHECK(run("") == 2);
}

TEST_CASE("pretrain, resume, finetune, evaluate and infer") {
  const fs::path pre = kRoot / "pre";
  REQUIRE(run("pretrain --epochs 1 --seed 3 --out " + pre.string() + kSmall) == 0);
  CHECK(fs::exists(pre / "config.yaml"));
  CHECK(count_lines(pre / "metrics.jsonl") == 1);
  const auto report = interflow::metrics::MetricsReport::load(pre / "report.json");
  CHECK(report.find("network", "All") != nullptr);

  const fs::path rerun = kRoot / "rerun";
  REQUIRE(run("pretrain --config " + (pre / "config.yaml").string() + " --out " + rerun.string()) == 0);
  CHECK(read_file(rerun / "metrics.jsonl") == read_file(pre / "metrics.jsonl"));

  REQUIRE(run("pretrain --epochs 2 --seed 3 --out " + pre.string() + " --resume " +
              (pre / "checkpoints" / "latest.ckpt").string() + kSmall) == 0);
  std::ifstream log(pre / "metrics.jsonl");
  std::string l1, l2;
  std::getline(log, l1);
  std::getline(log, l2);
  CHECK(l2.find("\"epoch\":2") != std::string::npos);

  const fs::path ckpt = pre / "checkpoints" / "best.ckpt";
  const fs::path ft = kRoot / "ft";
  REQUIRE(run("finetune --epochs 1 --out " + ft.string() + " --checkpoint " + ckpt.string() + kSmall) == 0);
  const fs::path flow_ckpt = ft / "checkpoints" / "best.ckpt";

  CHECK(run("eval-flow --out " + (kRoot / "ef_bad").string() + " --checkpoint " + ckpt.string()) == 6);
  REQUIRE(run("eval-flow --out " + (kRoot / "ef").string() + " --checkpoint " + flow_ckpt.string() + kSmall) == 0);
  REQUIRE(run("eval-interp --out " + (kRoot / "ei").string() + " --checkpoint " + ckpt.string() + kSmall) == 0);

  const fs::path frames = kRoot / "gen_a" / "seq_0000";
  auto frame = [&](int i) { return (frames / ("frame_000" + std::to_string(i) + ".png")).string(); };
  const fs::path i1 = kRoot / "infer1";
  REQUIRE(run("infer --out " + i1.string() + " --checkpoint " + ckpt.string() + " " + frame(0) + " " + frame(1) + " " +
              frame(2) + " " + frame(3)) == 0);
  CHECK(count_ext(i1, ".png") == 1);
  CHECK(run("infer --out " + (kRoot / "infer_bad").string() + " --checkpoint " + ckpt.string() + " " + frame(0) +
            " " + frame(1) + " " + frame(2)) == 2);
  const fs::path i2 = kRoot / "infer2";
  REQUIRE(run("infer --out " + i2.string() + " --checkpoint " + flow_ckpt.string() + " " + frame(0) + " " + frame(1) +
              " " + frame(2) + " " + frame(3) + " " + frame(4)) == 0);
  CHECK(count_ext(i2, ".flo") == 4);
  CHECK(count_ext(i2, ".png") == 4);
  const fs::path i3 = kRoot / "infer3";
  REQUIRE(run("infer --out " + i3.string() + " --checkpoint " + flow_ckpt.string() + " " + frame(0) + " " +
              frame(1)) == 0);
  CHECK(count_ext(i3, ".flo") == 1);

  const fs::path sw = kRoot / "sweep";
  REQUIRE(run("sweep --epochs 1 --sizes 4,8 --set sweep.repeats=1 --out " + sw.string() + " --checkpoint " +
              ckpt.string() + kSmall) == 0);
  const auto sweep = interflow::metrics::MetricsReport::load(sw / "report.json");
  CHECK(sweep.find("n=4", "validation") != nullptr);
  CHECK(sweep.find("n=8", "validation") != nullptr);
  CHECK(sweep.find("full", "validation") != nullptr);
}
