#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "playrec/pipeline.hpp"
#include "support.hpp"

using namespace playrec;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string output;
};

// Runs the CLI with the given arguments, capturing stdout and stderr.
Run cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(PLAYREC_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {status, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir));
  std::sort(out.begin(), out.end());
  return out;
}

const std::string kSmall = "--synthetic --num-users 40 --num-items 25 --seed 3 --deterministic";

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_config(R"({"seed": 9, "mrw": {"Q": 3}, "training.alpha": 0.8,
                                  "propagation": {"dim": 8}, "evalmetrics": {"ks": [5, 10]}})");
  CHECK(c.seed == 9);
  CHECK(c.walk.Q == 3);
  CHECK(c.train.balance.alpha == 0.8);
  CHECK(c.train.gcn.dim == 8);
  CHECK(c.ks == std::vector<std::size_t>{5, 10});
  CHECK_THROWS(parse_config(R"({"mrw": {"q": 3}})"));
  CHECK_THROWS(parse_config(R"({"bogus": 1})"));
  CHECK_THROWS(parse_config("{not json"));

  // round trip through config_to_json
  const auto again = parse_config(config_to_json(c));
  CHECK(again.walk.Q == 3);
  CHECK(again.train.gcn.dim == 8);

  PipelineConfig p;
  p.seed = 11;
  p.threads = 4;
  p.deterministic = true;
  const auto r = p.resolved();
  CHECK(r.walk.seed == 11);
  CHECK(r.train.balance.seed == 11);
  CHECK(r.walk.threads == 1);
}

TEST_CASE("ranges") {
  const auto a = parse_real_range("0.4:1.6:0.2");
  REQUIRE(a.size() == 7);
  CHECK(a.front() == doctest::Approx(0.4));
  CHECK(a.back() == doctest::Approx(1.6));
  CHECK(parse_count_range("0:4") == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(parse_count_range("1,3") == std::vector<std::size_t>{1, 3});
  CHECK(parse_real_range("0.6") == std::vector<double>{0.6});
  CHECK_THROWS(parse_real_range("1:0:0.1"));
  CHECK_THROWS(parse_count_range("x"));
}

TEST_CASE("cli: fit writes its artifacts") {
  testing::TempDir dir("cli_fit");
  const auto out = dir.path() / "out";
  const auto r = cli("fit " + kSmall + " --out " + out.string(), dir.path() / "log");
  REQUIRE(r.status == 0);
  for (const char* f : {"fit/models.jsonl", "fit/assignment.tsv", "fit/graph_views.tsv",
                        "fit/fit_report.json", "manifest.json", "fit_summary.json"})
    CHECK(fs::exists(out / f));
  CHECK(slurp(out / "fit/assignment.tsv").rfind("user_id\titem_id\tgamma\tlabel", 0) == 0);
}

TEST_CASE("cli: eval without a model fails cleanly") {
  testing::TempDir dir("cli_eval");
  const auto out = dir.path() / "out";
  const auto r = cli("eval " + kSmall + " --out " + out.string(), dir.path() / "log");
  CHECK(r.status != 0);
  CHECK(r.output.find("no model found") != std::string::npos);
  CHECK(files_under(out).empty());  // nothing half-written is left behind
}

TEST_CASE("cli: deterministic runs are byte-identical") {
  testing::TempDir dir("cli_det");
  const std::string model = " --dim 8 --epochs 2";
  for (const char* run : {"a", "b"}) {
    const auto out = dir.path() / run;
    for (const char* cmd : {"fit", "walk", "train", "eval"}) {
      const std::string flags = kSmall + (std::string(cmd) == "fit" ? "" : model);
      REQUIRE(cli(std::string(cmd) + " " + flags + " --out " + out.string(), dir.path() / "log").status == 0);
    }
  }
  const auto files = files_under(dir.path() / "a");
  CHECK(files == files_under(dir.path() / "b"));
  CHECK(std::find(files.begin(), files.end(), fs::path("checkpoint/state.bin")) != files.end());
  CHECK(std::find(files.begin(), files.end(), fs::path("eval/metrics.csv")) != files.end());
  for (const auto& f : files) {
    INFO(f.string());
    CHECK(slurp(dir.path() / "a" / f) == slurp(dir.path() / "b" / f));
  }
}

TEST_CASE("cli: analyze and verify-theory") {
  testing::TempDir dir("cli_misc");
  const auto out = dir.path() / "out";
  REQUIRE(cli("analyze " + kSmall + " --out " + out.string(), dir.path() / "log").status == 0);
  CHECK(slurp(out / "analyze/modal_overlap.csv").rfind("category,exact,partial,disjoint", 0) == 0);
  const auto r = cli("verify-theory " + kSmall + " --trials 300 --out " + out.string(), dir.path() / "log");
  REQUIRE(r.status == 0);
  CHECK(slurp(out / "theory/theory_report.json").find("\"z_score\"") != std::string::npos);
}

TEST_CASE("cli: small sweep") {
  testing::TempDir dir("cli_sweep");
  const auto out = dir.path() / "out";
  const auto r = cli("sweep " + kSmall + " --dim 8 --epochs 1 --alpha 0.4,1.6 --Q 0:1 --seeds 1,2 --out " +
                         out.string(),
                     dir.path() / "log");
  REQUIRE(r.status == 0);
  std::ifstream in(out / "sweep/sweep.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "alpha,Q,ndcg5,coverage5,gm");
  std::size_t rows = 0;
  while (std::getline(in, line)) rows += !line.empty();
  CHECK(rows == 4);
}

TEST_CASE("cli: bad arguments") {
  testing::TempDir dir("cli_bad");
  CHECK(cli("walk " + kSmall + " --alpha 0.1,0.2 --out " + (dir.path() / "o").string(), dir.path() / "log").status != 0);
  CHECK(cli("fit --out " + (dir.path() / "o").string(), dir.path() / "log").status != 0);  // no input
  CHECK(cli("nonsense", dir.path() / "log").status != 0);
}
