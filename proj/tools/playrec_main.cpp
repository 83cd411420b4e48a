#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "playrec/pipeline.hpp"

namespace {

using playrec::Command;

struct Flags {
  std::string config;
  std::string out;
  bool synthetic = false;
  std::optional<std::size_t> num_users, num_items, num_categories;
  std::string interactions, categories, embeddings;
  std::optional<std::uint64_t> seed;
  std::string seeds;
  std::optional<std::size_t> threads;
  bool deterministic = false;
  std::string alpha;
  std::string Q;
  std::string preset;
  std::optional<std::size_t> epochs;
  std::optional<double> learning_rate;
  std::optional<std::size_t> dim;
  std::optional<std::size_t> trials;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--out", f.out, "Output directory (artifacts and manifest.json)")->required();
  cmd->add_option("--config", f.config, "JSON config with module sections")
      ->check(CLI::ExistingFile);
  cmd->add_flag("--synthetic", f.synthetic, "Generate a synthetic dataset instead of reading files");
  cmd->add_option("--num-users", f.num_users, "Synthetic users (default 100)");
  cmd->add_option("--num-items", f.num_items, "Synthetic items (default 50)");
  cmd->add_option("--num-categories", f.num_categories, "Synthetic categories (default 8)");
  cmd->add_option("--interactions", f.interactions, "CSV user_id,item_id,playtime_minutes")
      ->check(CLI::ExistingFile);
  cmd->add_option("--categories", f.categories, "CSV item_id,category")->check(CLI::ExistingFile);
  cmd->add_option("--embeddings", f.embeddings, "Modal embeddings, CSV or PREC binary")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Global seed (default 1)");
  cmd->add_option("--threads", f.threads, "Worker threads (default: PLAYREC_THREADS or 1)");
  cmd->add_flag("--deterministic", f.deterministic, "Force single-threaded, reproducible runs");
}

void add_model(CLI::App* cmd, Flags& f) {
  cmd->add_option("--alpha", f.alpha, "Fusion weight alpha (default 0.6)");
  cmd->add_option("--Q", f.Q, "Per-category walk cap (default 1)");
  cmd->add_option("--epochs", f.epochs, "Training epochs (default 20)");
  cmd->add_option("--lr", f.learning_rate, "Learning rate (default 1e-3)");
  cmd->add_option("--dim", f.dim, "Embedding dimension (default 64)");
  cmd->add_option("--preset", f.preset, "accuracy | diversity | trade-off (sets alpha and Q)")
      ->check(CLI::IsMember({"accuracy", "diversity", "trade-off"}));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

playrec::PipelineConfig build_config(const Flags& f, Command command) {
  playrec::PipelineConfig c;
  c.threads = playrec::default_threads();
  if (!f.config.empty()) c = playrec::parse_config(read_file(f.config), c);
  if (f.synthetic) c.use_synthetic = true;
  if (f.num_users) c.synthetic.num_users = *f.num_users;
  if (f.num_items) c.synthetic.num_items = *f.num_items;
  if (f.num_categories) c.synthetic.num_categories = *f.num_categories;
  if (!f.interactions.empty()) {
    if (f.categories.empty() || f.embeddings.empty())
      throw playrec::DataError("--interactions needs --categories and --embeddings");
    c.use_synthetic = false;
    c.interactions = f.interactions;
    c.categories = f.categories;
    c.embeddings = f.embeddings;
  }
  if (f.seed) c.seed = *f.seed;
  if (f.threads) c.threads = *f.threads;
  if (f.deterministic) c.deterministic = true;
  if (!f.preset.empty()) {
    const auto preset = f.preset == "accuracy"    ? playrec::Preset::accuracy
                        : f.preset == "diversity" ? playrec::Preset::diversity
                                                  : playrec::Preset::trade_off;
    const auto v = playrec::preset_values(preset);
    c.train.balance.alpha = v.alpha;
    c.walk.Q = v.Q;
  }
  if (command != Command::sweep) {
    if (!f.alpha.empty()) {
      const auto a = playrec::parse_real_range(f.alpha);
      if (a.size() != 1) throw playrec::DomainError("--alpha takes one value outside sweep");
      c.train.balance.alpha = a[0];
    }
    if (!f.Q.empty()) {
      const auto q = playrec::parse_count_range(f.Q);
      if (q.size() != 1) throw playrec::DomainError("--Q takes one value outside sweep");
      c.walk.Q = q[0];
    }
  }
  if (f.epochs) c.train.balance.epochs = *f.epochs;
  if (f.learning_rate) c.train.balance.learning_rate = *f.learning_rate;
  if (f.dim) c.train.gcn.dim = *f.dim;
  if (f.trials) c.theory_trials = *f.trials;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Playtime-guided recommendation pipeline"};
  app.require_subcommand(1);
  Flags flags;
  const std::map<Command, std::pair<const char*, const char*>> commands{
      {Command::fit, {"fit", "Fit per-user dual-beta mixtures and label interactions"}},
      {Command::walk, {"walk", "Augment the interaction graph with multimodal random walks"}},
      {Command::train, {"train", "Train the fused model (resumes from an existing checkpoint)"}},
      {Command::eval, {"eval", "Evaluate the trained model on the test split"}},
      {Command::analyze, {"analyze", "Category overlap of top-N modal neighbors"}},
      {Command::verify_theory, {"verify-theory", "Check the walk coverage identities"}},
      {Command::sweep, {"sweep", "Grid over alpha and Q reporting NDCG@5, Coverage@5 and GM"}},
  };
  std::map<Command, CLI::App*> subs;
  for (const auto& [cmd, text] : commands) {
    CLI::App* sub = app.add_subcommand(text.first, text.second);
    add_common(sub, flags);
    if (cmd != Command::fit && cmd != Command::analyze) add_model(sub, flags);
    if (cmd == Command::verify_theory)
      sub->add_option("--trials", flags.trials, "Instrumented walks (default 10000)");
    if (cmd == Command::sweep)
      sub->add_option("--seeds", flags.seeds, "Seeds, e.g. 1,2,3 or 1:3 (default: --seed)");
    subs[cmd] = sub;
  }
  CLI11_PARSE(app, argc, argv);

  Command command = Command::fit;
  for (const auto& [cmd, sub] : subs)
    if (sub->parsed()) command = cmd;

  try {
    const playrec::PipelineConfig config = build_config(flags, command);
    playrec::SweepGrid grid;
    if (command == Command::sweep) {
      grid.alphas = playrec::parse_real_range(flags.alpha.empty() ? "0.4:1.6:0.2" : flags.alpha);
      grid.Qs = playrec::parse_count_range(flags.Q.empty() ? "0:4" : flags.Q);
      if (flags.seeds.empty()) {
        grid.seeds = {config.seed};
      } else {
        for (std::size_t s : playrec::parse_count_range(flags.seeds)) grid.seeds.push_back(s);
      }
    }
    std::cout << playrec::run_command(command, config, flags.out, grid) << '\n';
    if (command == Command::eval) {
      std::ifstream table(std::filesystem::path(flags.out) / "eval" / "metrics.txt");
      std::cerr << table.rdbuf();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
