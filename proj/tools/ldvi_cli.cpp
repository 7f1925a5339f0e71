// Command-line front end over the C API.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ldvi/ldvi.h"

using nlohmann::json;

namespace {

// Exit codes: 0 all runs completed / all checks passed, 1 some did not,
// 2 bad arguments, 3 file trouble, 4 internal error.
int exit_code(ldvi_status s) {
  switch (s) {
    case LDVI_OK: return 0;
    case LDVI_RUN_INCOMPLETE: return 1;
    case LDVI_INVALID_ARGUMENT: return 2;
    case LDVI_IO_ERROR: return 3;
    default: return 4;
  }
}

int fail(ldvi_status s) {
  std::cerr << "error: " << ldvi_last_error() << '\n';
  return exit_code(s);
}

std::string take(char* s) {
  std::string out = s ? s : "";
  ldvi_string_free(s);
  return out;
}

void print_summary(const char* record_json, void*) {
  const json r = json::parse(record_json);
  const json& p = r.at("plan");
  std::printf("%-8s %-10s K=%-4zu lr=%-8g seed=%-3llu %-9s", p.at("method").get<std::string>().c_str(),
              p.at("model").get<std::string>().c_str(), p.at("K").get<std::size_t>(), p.at("lr").get<double>(),
              static_cast<unsigned long long>(p.at("seed").get<std::uint64_t>()),
              r.at("status").get<std::string>().c_str());
  if (r.at("status") == "completed") {
    std::printf(" ELBO %.4f ± %.4f (n=%zu) %.1fs", r.at("final_mean").get<double>(),
                r.at("final_stderr").get<double>(), r.at("final_n").get<std::size_t>(),
                r.at("wall_time_s").get<double>());
  } else {
    std::printf(" %s", r.at("message").get<std::string>().c_str());
  }
  std::printf("\n");
  std::fflush(stdout);
}

struct RunFlags {
  std::vector<std::string> methods;
  std::vector<std::string> models;
  std::vector<long long> Ks;
  std::vector<double> lrs;
  std::size_t steps = 0;
  std::string seeds;
  std::size_t batch = 0;
  std::size_t eval_samples = 0;
  std::size_t threads = 0;
  std::string out;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--method", f.methods, "ULA, MCD, UHA, LDVI, UHA_EM, LDVI_EM or PlainVI")->delimiter(',');
  cmd->add_option("--model", f.models, "ionosphere, sonar, brownian, lorenz, seeds or toy<D>")->delimiter(',');
  cmd->add_option("--K", f.Ks, "number of bridging densities")->delimiter(',');
  cmd->add_option("--lr", f.lrs, "Adam learning rates")->delimiter(',');
  cmd->add_option("--steps", f.steps, "training steps per run");
  cmd->add_option("--seeds", f.seeds, "seed count N (seeds 0..N-1) or a comma list such as 3,7");
  cmd->add_option("--batch", f.batch, "chains per gradient step");
  cmd->add_option("--eval-samples", f.eval_samples, "ELBO samples for the final evaluation");
  cmd->add_option("--threads", f.threads, "worker threads per run");
  cmd->add_option("--out", f.out, "append run records (NDJSON) to this file");
}

// Flags override the config file key by key.
json merge_flags(json cfg, const RunFlags& f) {
  if (!f.methods.empty()) cfg["method"] = f.methods;
  if (!f.models.empty()) cfg["model"] = f.models;
  if (!f.Ks.empty()) cfg["K"] = f.Ks;
  if (!f.lrs.empty()) cfg["lr"] = f.lrs;
  if (f.steps) cfg["steps"] = f.steps;
  if (f.batch) cfg["batch"] = f.batch;
  if (f.eval_samples) cfg["eval_samples"] = f.eval_samples;
  if (!f.seeds.empty()) {
    if (f.seeds.find(',') == std::string::npos) {
      cfg["seeds"] = std::stoull(f.seeds);
    } else {
      json list = json::array();
      std::stringstream ss(f.seeds);
      std::string tok;
      while (std::getline(ss, tok, ',')) list.push_back(std::stoull(tok));
      cfg["seeds"] = list;
    }
  }
  return cfg;
}

int run_config(ldvi_session* session, const json& cfg, const std::string& out) {
  std::size_t completed = 0, total = 0;
  const ldvi_status s = ldvi_run_grid(session, cfg.dump().c_str(), out.empty() ? nullptr : out.c_str(),
                                      print_summary, nullptr, &completed, &total);
  if (s == LDVI_OK || s == LDVI_RUN_INCOMPLETE) std::printf("%zu of %zu runs completed\n", completed, total);
  return s == LDVI_OK ? 0 : fail(s);
}

bool write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  return static_cast<bool>(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Langevin-diffusion variational inference: train, compare and report"};
  app.require_subcommand(1);
  std::string data_dir = "data";
  app.add_option("--data-dir", data_dir, "directory holding ionosphere.csv and sonar.csv")
      ->envname("LDVI_DATA_DIR");

  RunFlags train_flags;
  auto* train = app.add_subcommand("train", "train one method on one model (every K, lr and seed given)");
  add_run_flags(train, train_flags);

  RunFlags grid_flags;
  std::string config_path;
  auto* grid = app.add_subcommand("grid", "run a grid from a JSON config and/or flags; lr defaults to 1e-3,1e-4,1e-5");
  grid->add_option("--config", config_path, "JSON grid config");
  add_run_flags(grid, grid_flags);

  std::string report_in, report_csv;
  auto* report = app.add_subcommand("report", "tables of best-lr mean ± sd over seeds");
  report->add_option("--in", report_in, "NDJSON run records")->required();
  report->add_option("--csv", report_csv, "also write the CSV here");

  auto* check = app.add_subcommand("check", "run the oracle and invariant suite");

  RunFlags plain_flags;
  auto* plain = app.add_subcommand("reproduce-plainvi", "plain-VI baselines on the four benchmark models");
  plain->add_option("--model", plain_flags.models, "subset of models")->delimiter(',');
  plain->add_option("--steps", plain_flags.steps, "training steps after pre-training");
  plain->add_option("--seeds", plain_flags.seeds, "number of seeds");
  plain->add_option("--eval-samples", plain_flags.eval_samples, "ELBO samples for the final evaluation");
  plain->add_option("--out", plain_flags.out, "append run records (NDJSON) to this file");

  CLI11_PARSE(app, argc, argv);

  ldvi_session* session = nullptr;
  if (ldvi_session_create(data_dir.c_str(), &session) != LDVI_OK) return fail(LDVI_INTERNAL_ERROR);
  struct Guard {
    ldvi_session* s;
    ~Guard() { ldvi_session_destroy(s); }
  } guard{session};

  try {
    if (*train) {
      if (train_flags.methods.empty() || train_flags.models.empty()) {
        std::cerr << "error: train needs --method and --model\n";
        return 2;
      }
      if (train_flags.threads) ldvi_session_set_threads(session, train_flags.threads);
      json cfg = {{"K", {8}}, {"lr", {1e-3}}, {"seeds", 1}};
      return run_config(session, merge_flags(cfg, train_flags), train_flags.out);
    }
    if (*grid) {
      json cfg = json::object();
      if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) {
          std::cerr << "error: cannot open " << config_path << '\n';
          return 3;
        }
        try {
          cfg = json::parse(in);
        } catch (const json::exception& e) {
          std::cerr << "error: " << config_path << ": " << e.what() << '\n';
          return 2;
        }
      }
      if (grid_flags.threads) ldvi_session_set_threads(session, grid_flags.threads);
      return run_config(session, merge_flags(cfg, grid_flags), grid_flags.out);
    }
    if (*report) {
      char* text = nullptr;
      char* csv = nullptr;
      const ldvi_status s = ldvi_report_file(report_in.c_str(), &text, &csv);
      if (s != LDVI_OK) return fail(s);
      const std::string t = take(text), c = take(csv);
      std::cout << t;
      if (!report_csv.empty() && !write_file(report_csv, c)) {
        std::cerr << "error: cannot write " << report_csv << '\n';
        return 3;
      }
      return 0;
    }
    if (*check) {
      char* results = nullptr;
      int all = 0;
      const ldvi_status s = ldvi_selfcheck(&results, &all);
      if (s != LDVI_OK) return fail(s);
      for (const auto& c : json::parse(take(results))) {
        std::printf("%s  %-52s %.3g (limit %.3g)%s%s\n", c.at("passed").get<bool>() ? "PASS" : "FAIL",
                    c.at("name").get<std::string>().c_str(), c.at("value").get<double>(),
                    c.at("limit").get<double>(), c.at("detail").get<std::string>().empty() ? "" : "  ",
                    c.at("detail").get<std::string>().c_str());
      }
      return all ? 0 : 1;
    }
    if (*plain) {
      json opts = json::object();
      if (!plain_flags.models.empty()) opts["models"] = plain_flags.models;
      if (plain_flags.steps) opts["steps"] = plain_flags.steps;
      if (plain_flags.eval_samples) opts["eval_samples"] = plain_flags.eval_samples;
      if (!plain_flags.seeds.empty()) opts["seeds"] = std::stoull(plain_flags.seeds);
      char* summary = nullptr;
      int within = 0;
      const ldvi_status s =
          ldvi_reproduce_plainvi(session, opts.dump().c_str(), plain_flags.out.empty() ? nullptr : plain_flags.out.c_str(),
                                 print_summary, nullptr, &summary, &within);
      if (s != LDVI_OK && s != LDVI_RUN_INCOMPLETE) return fail(s);
      std::printf("\n%-12s %10s %10s %8s %8s\n", "model", "published", "ours", "sd", "diff");
      for (const auto& row : json::parse(take(summary))) {
        if (row.at("mean").is_null()) {
          std::printf("%-12s %10.1f %10s\n", row.at("model").get<std::string>().c_str(),
                      row.at("published").get<double>(), "—");
          continue;
        }
        std::printf("%-12s %10.1f %10.2f %8.2f %+8.2f %s\n", row.at("model").get<std::string>().c_str(),
                    row.at("published").get<double>(), row.at("mean").get<double>(), row.at("sd").get<double>(),
                    row.at("difference").get<double>(), row.at("within").get<bool>() ? "within 2 nats" : "OUTSIDE");
      }
      if (s != LDVI_OK) return fail(s);
      return within ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
