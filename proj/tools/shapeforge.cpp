// Command-line front end for the full experiment lifecycle:
//   gen      generate the synthetic datasets for a run
//   augment  materialize one augmented epoch to disk with provenance
//   train    train one mode (baseline | eleas)
//   eval     evaluate a trained checkpoint into a metrics report
//   compare  diff two metrics reports
//   run-all  gen + train + eval for every mode, then compare

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "shapeforge/run.hpp"

namespace sf = shapeforge;

namespace {

struct CliOptions {
  std::string config_path;
  sf::RunConfig flags;  // values parsed from the command line
  CLI::Option* opt[16] = {};
  enum Field {
    kSeed, kOut, kAlpha, kBeta, kEta, kGrid, kEpochs, kLr, kMomentum,
    kBatchSize, kTrainN, kTestN, kConflictN, kPairsM, kThreads, kSchedule
  };
};

void add_common_options(CLI::App* cmd, CliOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON config file; flags win over file values");
  o.opt[CliOptions::kSeed] = cmd->add_option("--seed", o.flags.seed, "root seed");
  o.opt[CliOptions::kOut] = cmd->add_option("--out", o.flags.out_dir, "output directory");
  o.opt[CliOptions::kAlpha] = cmd->add_option("--alpha", o.flags.alpha, "Beta alpha");
  o.opt[CliOptions::kBeta] = cmd->add_option("--beta", o.flags.beta, "Beta beta");
  o.opt[CliOptions::kEta] = cmd->add_option("--eta", o.flags.eta, "loss mixing weight");
  o.opt[CliOptions::kGrid] = cmd->add_option("--grid", o.flags.grid, "patch-shuffle grid");
  o.opt[CliOptions::kEpochs] = cmd->add_option("--epochs", o.flags.epochs, "training epochs");
  o.opt[CliOptions::kLr] = cmd->add_option("--lr", o.flags.lr, "learning rate");
  o.opt[CliOptions::kMomentum] = cmd->add_option("--momentum", o.flags.momentum, "SGD momentum");
  o.opt[CliOptions::kBatchSize] = cmd->add_option("--batch-size", o.flags.batch_size, "batch size");
  o.opt[CliOptions::kTrainN] = cmd->add_option("--train-n", o.flags.train_n, "train split size");
  o.opt[CliOptions::kTestN] = cmd->add_option("--test-n", o.flags.test_n, "independent test split size");
  o.opt[CliOptions::kConflictN] = cmd->add_option("--conflict-n", o.flags.conflict_n, "conflict split size");
  o.opt[CliOptions::kPairsM] = cmd->add_option("--pairs-m", o.flags.pairs_m, "pairs per factor set");
  o.opt[CliOptions::kThreads] = cmd->add_option("--threads", o.flags.threads,
                                                "data-generation workers (0 = auto)");
  o.opt[CliOptions::kSchedule] = cmd->add_option("--lr-schedule", o.flags.lr_schedule,
                                                 "step | cosine");
}

sf::RunConfig effective_config(const CliOptions& o) {
  sf::RunConfig cfg;
  if (!o.config_path.empty()) {
    if (!std::filesystem::exists(o.config_path))
      throw sf::ConfigError("config file not found: " + o.config_path);
    cfg = sf::config_from_json(sf::json::parse(sf::read_file(o.config_path)));
  }
  auto set = [&](CliOptions::Field f) { return o.opt[f] && o.opt[f]->count() > 0; };
  if (set(CliOptions::kSeed)) cfg.seed = o.flags.seed;
  if (set(CliOptions::kOut)) cfg.out_dir = o.flags.out_dir;
  if (set(CliOptions::kAlpha)) cfg.alpha = o.flags.alpha;
  if (set(CliOptions::kBeta)) cfg.beta = o.flags.beta;
  if (set(CliOptions::kEta)) cfg.eta = o.flags.eta;
  if (set(CliOptions::kGrid)) cfg.grid = o.flags.grid;
  if (set(CliOptions::kEpochs)) cfg.epochs = o.flags.epochs;
  if (set(CliOptions::kLr)) cfg.lr = o.flags.lr;
  if (set(CliOptions::kMomentum)) cfg.momentum = o.flags.momentum;
  if (set(CliOptions::kBatchSize)) cfg.batch_size = o.flags.batch_size;
  if (set(CliOptions::kTrainN)) cfg.train_n = o.flags.train_n;
  if (set(CliOptions::kTestN)) cfg.test_n = o.flags.test_n;
  if (set(CliOptions::kConflictN)) cfg.conflict_n = o.flags.conflict_n;
  if (set(CliOptions::kPairsM)) cfg.pairs_m = o.flags.pairs_m;
  if (set(CliOptions::kThreads)) cfg.threads = o.flags.threads;
  if (set(CliOptions::kSchedule)) cfg.lr_schedule = o.flags.lr_schedule;
  sf::validate_config(cfg);
  return cfg;
}

sf::TrainMode parse_mode(const std::string& mode) {
  if (mode == "baseline") return sf::TrainMode::kBaseline;
  if (mode == "eleas") return sf::TrainMode::kEleas;
  throw sf::ConfigError("mode must be 'baseline' or 'eleas', got '" + mode + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ELeaS adversarial-augmentation pipeline on synthetic shape/texture data"};
  app.require_subcommand(1);

  CliOptions gen_o, aug_o, train_o, eval_o, all_o;
  std::string train_mode = "baseline", eval_mode = "baseline";
  std::string report_a, report_b, compare_out;

  CLI::App* c_gen = app.add_subcommand("gen", "generate datasets");
  add_common_options(c_gen, gen_o);
  CLI::App* c_aug = app.add_subcommand("augment", "materialize an augmented set");
  add_common_options(c_aug, aug_o);
  CLI::App* c_train = app.add_subcommand("train", "train one mode");
  add_common_options(c_train, train_o);
  c_train->add_option("--mode", train_mode, "baseline | eleas")->required();
  CLI::App* c_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common_options(c_eval, eval_o);
  c_eval->add_option("--mode", eval_mode, "baseline | eleas")->required();
  CLI::App* c_cmp = app.add_subcommand("compare", "diff two metrics reports");
  c_cmp->add_option("report_a", report_a, "first report (e.g. baseline)")->required();
  c_cmp->add_option("report_b", report_b, "second report (e.g. eleas)")->required();
  c_cmp->add_option("--out", compare_out, "write comparison.{json,txt} with this prefix");
  CLI::App* c_all = app.add_subcommand("run-all", "gen + train + eval + compare");
  add_common_options(c_all, all_o);

  try {
    app.parse(argc, argv);

    if (c_gen->parsed()) {
      sf::RunConfig cfg = effective_config(gen_o);
      sf::cmd_gen(cfg);
      std::cout << "generated datasets under " << sf::run_dir(cfg).string() << "/data\n";
    } else if (c_aug->parsed()) {
      sf::RunConfig cfg = effective_config(aug_o);
      auto man = sf::cmd_augment(cfg);
      std::cout << "materialized " << man.count << " augmented samples ("
                << man.sha256.substr(0, 12) << ") under "
                << sf::run_dir(cfg).string() << "/augmented\n";
    } else if (c_train->parsed()) {
      sf::RunConfig cfg = effective_config(train_o);
      sf::TrainMode mode = parse_mode(train_mode);
      auto result = sf::cmd_train(cfg, mode);
      double acc = result.log.empty() ? 0.0 : result.log.back().train_acc;
      std::cout << "trained " << train_mode << " for " << result.log.size()
                << " epochs, final train_acc " << acc << ", checkpoint at "
                << (sf::run_dir(cfg) / ("checkpoint_" + train_mode + ".ckpt")).string()
                << "\n";
    } else if (c_eval->parsed()) {
      sf::RunConfig cfg = effective_config(eval_o);
      auto report = sf::cmd_eval(cfg, parse_mode(eval_mode));
      std::cout << "evaluated " << eval_mode << ": clean_acc " << report.clean_acc
                << ", shape_bias " << report.conflict.shape_bias << ", shape_fraction "
                << report.factor.shape_fraction << ", miou " << report.miou << "\n"
                << "report at "
                << (sf::run_dir(cfg) / ("report_" + eval_mode + ".json")).string() << "\n";
    } else if (c_cmp->parsed()) {
      auto cmp = sf::cmd_compare(report_a, report_b);
      std::cout << cmp.text;
      if (!compare_out.empty()) {
        sf::write_file(compare_out + "comparison.json", cmp.table.dump(2) + "\n");
        sf::write_file(compare_out + "comparison.txt", cmp.text);
      }
    } else if (c_all->parsed()) {
      sf::RunConfig cfg = effective_config(all_o);
      sf::cmd_run_all(cfg);
      auto dir = sf::run_dir(cfg);
      std::cout << "run complete: " << dir.string() << "\n";
      if (std::filesystem::exists(dir / "comparison.txt"))
        std::cout << sf::read_file((dir / "comparison.txt").string());
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // config error family
  } catch (const sf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const sf::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const sf::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
