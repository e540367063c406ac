#include <iostream>

#include <CLI11.hpp>

#include "geoprev_app/run.hpp"

int main(int argc, char** argv) {
  using namespace geoprev::app;
  CLI::App app{"geoprev: prevalence mapping experiments"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config;
  Overrides ov;
  std::string out;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool early_stop = false;

  const std::pair<Command, const char*> commands[] = {
      {Command::Fit, "Fit a model to a survey and write model.json"},
      {Command::Predict, "Predict mean.asc and sd.asc over a grid"},
      {Command::Simulate, "Simulate a survey from a prevalence surface"},
      {Command::Cv, "Spatially blocked cross-validation"},
      {Command::Bench, "Fit and predict timings over dataset sizes"},
  };
  for (const auto& [cmd, help] : commands) {
    auto* sub = app.add_subcommand(to_string(cmd), help);
    sub->add_option("--config", config, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory (overrides the config)");
    sub->add_option("--seed", seed, "Random seed (overrides the config)");
    sub->add_option("--threads", threads, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
    sub->add_flag("--early-stop", early_stop, "gp: stop boosting once the NLL improves by < 1e-8");
  }

  CLI11_PARSE(app, argc, argv);

  Command command = Command::Fit;
  for (const auto* sub : app.get_subcommands()) command = command_from_string(sub->get_name());
  for (const auto* sub : app.get_subcommands()) {
    if (sub->count("--out")) ov.out_dir = out;
    if (sub->count("--seed")) ov.seed = seed;
    if (sub->count("--threads")) ov.threads = threads;
  }
  ov.early_stop = early_stop;
  return run_command(command, config, ov, std::cout, std::cerr);
}
