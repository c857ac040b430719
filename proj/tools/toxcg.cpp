//
// Copyright 2026 The toxcg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//


// Command-line front end: one subcommand per pipeline stage.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "toxcg/core.hpp"
#include "toxcg/pipeline.hpp"

namespace {

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  bool quiet = false;
};

void add_common(CLI::App* sub, Options& opts) {
  sub->add_option("-c,--config", opts.config, "JSON run config (defaults apply when omitted)");
  sub->add_option("--set", opts.overrides, "Override one config field, e.g. --set seed=3 (repeatable)")
      ->take_all()
      ->allow_extra_args(false);
  sub->add_flag("-q,--quiet", opts.quiet, "Suppress progress lines on stderr");
}

int run_stage(const std::string& stage, const Options& opts) {
  const auto config = toxcg::load_config(opts.config, opts.overrides);
  toxcg::LogSink log = opts.quiet ? toxcg::LogSink([](const std::string&) {}) : toxcg::LogSink(toxcg::stderr_log);
  toxcg::Pipeline pipeline(config, log);
  if (stage == "all") {
    pipeline.run_all();
  } else {
    pipeline.run(stage);
  }
  return 0;
}

int print_config(const Options& opts) {
  std::cout << toxcg::to_json(toxcg::load_config(opts.config, opts.overrides)).dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"toxcg: concept-gradient toxicity interpretability pipeline"};
  app.set_version_flag("--version", std::string(toxcg::kVersion));
  app.require_subcommand(1);
  app.allow_extras(false);

  Options opts;
  const std::vector<std::pair<std::string, std::string>> stages{
      {"synth", "Write the planted-concept synthetic corpus"},
      {"prepare", "Load, binarize and split the corpus"},
      {"train-target", "Train the toxicity classifier"},
      {"train-concepts", "Train concept heads on the frozen target encoder"},
      {"eval", "Score the target (and concept) model on the test split"},
      {"attribute", "Concept attributions, condition aggregates and comparative table"},
      {"curate", "Mine misclassifications, build lexicon sets and word-concept alignment"},
      {"augment", "Generate lexicon-free samples, retrain and compare"},
      {"kfold", "Cross-validated F1 before and after augmentation"},
      {"all", "Run every stage in order"},
      {"config", "Print the resolved config"},
  };
  std::string chosen;
  for (const auto& [name, help] : stages) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, opts);
    sub->callback([&chosen, name = name] { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : toxcg::exit_code(toxcg::ErrorKind::kConfig);
  }

  try {
    if (chosen == "config") return print_config(opts);
    return run_stage(chosen, opts);
  } catch (const toxcg::Error& e) {
    std::cerr << "toxcg: " << toxcg::to_string(e.kind()) << " error: " << e.what() << '\n';
    return toxcg::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "toxcg: error: " << e.what() << '\n';
    return 1;
  }
}
