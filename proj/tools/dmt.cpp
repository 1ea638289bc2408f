#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "dmt/errors.hpp"
#include "dmt/experiment.hpp"

namespace {

struct Cli {
  std::string command;
  std::string config_path;
  std::string l2_list;
  std::string selection_list;
  std::string seed;
  std::string out_dir = ".";
};

void add_common(CLI::App* sub, Cli& cli) {
  sub->add_option("--config", cli.config_path, "key=value config file")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--l2", cli.l2_list,
                  "prior scale l^2 override; comma list for sweep");
  sub->add_option("--selection", cli.selection_list,
                  "gate selection preset override; comma list for sweep");
  sub->add_option("--seed", cli.seed, "master seed override");
  sub->add_option("--out", cli.out_dir, "artifact directory (default .)");
  sub->callback([sub, &cli] { cli.command = sub->get_name(); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variational dropout transformer experiments"};
  app.require_subcommand(1);

  Cli cli;
  add_common(app.add_subcommand("pretrain", "train base weights and write checkpoint"), cli);
  add_common(app.add_subcommand("finetune", "train dropout gates on a frozen checkpoint"), cli);
  add_common(app.add_subcommand("generate", "sample models and decode translation groups"), cli);
  add_common(app.add_subcommand("evaluate", "score group files with BLEU and Pairwise-BLEU"), cli);
  add_common(app.add_subcommand("sweep", "fine-tune across l^2 and selections, write CSV"), cli);
  add_common(app.add_subcommand("analyze", "per-module importance report"), cli);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    dmt::ExperimentConfig cfg = dmt::load_config(cli.config_path);
    if (!cli.seed.empty()) dmt::set_config_key(cfg, "seed", cli.seed);
    if (!cli.l2_list.empty())
      dmt::set_config_key(cfg, cli.command == "sweep" ? "sweep_l2" : "l2", cli.l2_list);
    if (!cli.selection_list.empty())
      dmt::set_config_key(cfg, cli.command == "sweep" ? "sweep_selections" : "selection",
                          cli.selection_list);
    dmt::resolve_config(cfg);

    if (cli.command == "pretrain") dmt::cmd_pretrain(cfg, cli.out_dir);
    else if (cli.command == "finetune") dmt::cmd_finetune(cfg, cli.out_dir);
    else if (cli.command == "generate") dmt::cmd_generate(cfg, cli.out_dir);
    else if (cli.command == "evaluate") dmt::cmd_evaluate(cfg, cli.out_dir);
    else if (cli.command == "sweep") dmt::cmd_sweep(cfg, cli.out_dir);
    else if (cli.command == "analyze") dmt::cmd_analyze(cfg, cli.out_dir);
    return 0;
  } catch (const dmt::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dmt::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
