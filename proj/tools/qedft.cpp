// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line runner. Talks to the library through the C API only.

#include <cstdio>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "qedft/qedft.h"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

int exit_code(qedft_status s) {
  switch (s) {
    case QEDFT_OK: return 0;
    case QEDFT_ERR_CONFIG:
    case QEDFT_ERR_UNSUPPORTED:
    case QEDFT_ERR_INVALID_ARGUMENT: return kExitConfig;
    default: return kExitSolver;
  }
}

int report(qedft_status s, const std::string& where) {
  std::fprintf(stderr, "qedft: %s: %s: %s\n", where.c_str(), qedft_status_name(s), qedft_last_error());
  return exit_code(s);
}

struct Common {
  std::string config;
  std::string output;
  int workers = 1;
  std::optional<std::uint64_t> seed;
  bool json = false;
};

void add_common(CLI::App* sub, Common& c, bool run_flags) {
  sub->add_option("config", c.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  if (!run_flags) return;
  sub->add_option("-o,--output", c.output, "Output directory (overrides the config)");
  sub->add_option("-j,--workers", c.workers, "Worker threads for k-points and lambda points")
      ->check(CLI::Range(1, 64));
  sub->add_option("--seed", c.seed, "Seed override for shot sampling");
  sub->add_flag("--json", c.json, "Print summary.json to stdout");
}

int execute(const Common& c, bool scan) {
  qedft_config* cfg = nullptr;
  qedft_status s = qedft_config_load(c.config.c_str(), &cfg);
  if (s != QEDFT_OK) return report(s, c.config);
  if (scan && !qedft_config_has_scan(cfg)) {
    std::fprintf(stderr, "qedft: %s: config error: no scan section\n", c.config.c_str());
    qedft_config_free(cfg);
    return kExitConfig;
  }
  qedft_run_options opts;
  qedft_run_options_init(&opts);
  opts.workers = c.workers;
  if (c.seed) {
    opts.has_seed = 1;
    opts.seed = *c.seed;
  }
  if (!c.output.empty()) opts.output = c.output.c_str();
  qedft_result* res = nullptr;
  s = scan ? qedft_scan(cfg, &opts, &res) : qedft_run(cfg, &opts, &res);
  if (s != QEDFT_OK) {
    const int code = report(s, c.config);
    qedft_config_free(cfg);
    return code;
  }
  if (c.json) {
    std::puts(qedft_result_json(res));
  } else {
    char hash[17];
    qedft_config_hash(cfg, hash, sizeof hash);
    double failed = 0.0;
    if (scan && qedft_result_number(res, "/failed_points", &failed) == QEDFT_OK && failed > 0) {
      std::fprintf(stderr, "qedft: %d scan point(s) failed, see summary.json\n", static_cast<int>(failed));
    }
    std::printf("%s %s config=%s\n", scan ? "scan" : "run", qedft_config_method(cfg), hash);
  }
  qedft_result_free(res);
  qedft_config_free(cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qedft: qubit-efficient DFT simulator"};
  app.set_version_flag("--version", std::string(qedft_version()));
  app.require_subcommand(1);

  Common run_args, scan_args, check_args;
  add_common(app.add_subcommand("run", "Run one experiment"), run_args, true);
  add_common(app.add_subcommand("scan", "Run the scan section of a config"), scan_args, true);
  auto* check = app.add_subcommand("validate-config", "Parse and check a config without running it");
  add_common(check, check_args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (app.got_subcommand("run")) return execute(run_args, false);
  if (app.got_subcommand("scan")) return execute(scan_args, true);

  qedft_config* cfg = nullptr;
  const qedft_status s = qedft_config_load(check_args.config.c_str(), &cfg);
  if (s != QEDFT_OK) return report(s, check_args.config);
  char hash[17];
  qedft_config_hash(cfg, hash, sizeof hash);
  std::printf("ok %s config=%s%s\n", qedft_config_method(cfg), hash, qedft_config_has_scan(cfg) ? " scan" : "");
  qedft_config_free(cfg);
  return 0;
}
