#include <CLI11.hpp>
#include <functional>
#include <iostream>
#include <map>

#include "iif/commands.hpp"
#include "iif/errors.hpp"

namespace {

struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  long long seed = -1;
  bool quiet = false;
  std::vector<std::string> inputs;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "config file (key = value lines)");
  cmd->add_option("--set", f.sets, "override, key=value (repeatable)");
  cmd->add_option("--out", f.out, "output directory (overrides output.dir)");
  cmd->add_option("--seed", f.seed, "master seed (overrides seed)")->check(CLI::NonNegativeNumber);
  cmd->add_flag("--quiet", f.quiet, "suppress progress messages");
}

iif::RunContext context(const Flags& f) {
  iif::RunContext ctx;
  if (!f.config.empty()) ctx.cfg = iif::Config::load(f.config);
  for (const auto& s : f.sets) ctx.cfg.set(s);
  if (f.seed >= 0) ctx.cfg.set("seed", std::to_string(f.seed));
  if (!f.out.empty()) ctx.cfg.set("output.dir", f.out);
  ctx.out = ctx.cfg.text("output.dir");
  ctx.quiet = f.quiet;
  ctx.inputs = f.inputs;
  ctx.log = &std::cerr;
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Integrated influence data attribution"};
  app.require_subcommand(1);
  Flags flags;
  const std::map<std::string, std::pair<std::string, std::function<void(const iif::RunContext&)>>> cmds = {
      {"gen-data", {"write synthetic datasets", iif::cmd_gen_data}},
      {"attribute", {"score training samples with one estimator", iif::cmd_attribute}},
      {"eval-lds", {"linear datamodeling score of score files", iif::cmd_eval_lds}},
      {"eval-mislabel", {"mislabel detection AUC from self-influence", iif::cmd_eval_mislabel}},
      {"demo-sinc", {"sinc toy regression with a zero-residual sample", iif::cmd_demo_sinc}},
      {"report-proponents", {"top proponents and opponents", iif::cmd_report_proponents}},
  };
  std::map<CLI::App*, std::function<void(const iif::RunContext&)>> handlers;
  for (const auto& [name, entry] : cmds) {
    auto* sub = app.add_subcommand(name, entry.first);
    add_common(sub, flags);
    if (name == "eval-lds") sub->add_option("scores", flags.inputs, "scores CSV files");
    handlers[sub] = entry.second;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    for (auto& [sub, run] : handlers)
      if (sub->parsed()) run(context(flags));
  } catch (const iif::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const iif::InvalidArgument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const iif::Unsupported& e) {
    std::cerr << "unsupported: " << e.what() << '\n';
    return 2;
  } catch (const iif::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const iif::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
