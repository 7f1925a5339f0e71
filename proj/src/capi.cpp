#include "ldvi/ldvi.h"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <stdexcept>
#include <string>

#include "ldvi/cli.hpp"
#include "ldvi/selfcheck.hpp"

using nlohmann::json;

struct ldvi_session {
  std::string data_dir = "data";
  std::size_t threads = 0;
};

namespace {

thread_local std::string last_error;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

template <class F>
ldvi_status guarded(F&& f) {
  last_error.clear();
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    last_error = e.what();
    return LDVI_INVALID_ARGUMENT;
  } catch (const std::out_of_range& e) {
    last_error = e.what();
    return LDVI_INVALID_ARGUMENT;
  } catch (const json::exception& e) {
    last_error = e.what();
    return LDVI_INVALID_ARGUMENT;
  } catch (const IoError& e) {
    last_error = e.what();
    return LDVI_IO_ERROR;
  } catch (const std::exception& e) {
    last_error = e.what();
    return LDVI_INTERNAL_ERROR;
  } catch (...) {
    last_error = "unknown error";
    return LDVI_INTERNAL_ERROR;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw std::invalid_argument(std::string(what) + " must not be NULL");
}

void apply_session(const ldvi_session& s, ldvi::TrainPlan& p) {
  if (p.data_dir.empty()) p.data_dir = s.data_dir;
  if (s.threads > 0) p.threads = s.threads;
}

void save(const char* out_path, const ldvi::RunRecord& r) {
  if (!out_path) return;
  try {
    ldvi::append_record(out_path, r);
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
}

double mean_of(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  return m / static_cast<double>(x.size());
}

double sd_of(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

}  // namespace

extern "C" {

const char* ldvi_version(void) { return "0.1.0"; }

const char* ldvi_last_error(void) { return last_error.c_str(); }

void ldvi_string_free(char* s) { std::free(s); }

ldvi_status ldvi_session_create(const char* data_dir, ldvi_session** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    auto* s = new ldvi_session;
    if (data_dir && *data_dir) s->data_dir = data_dir;
    *out = s;
    return LDVI_OK;
  });
}

void ldvi_session_destroy(ldvi_session* session) { delete session; }

ldvi_status ldvi_session_set_threads(ldvi_session* session, size_t threads) {
  return guarded([&] {
    require(session, "session");
    session->threads = threads;
    return LDVI_OK;
  });
}

ldvi_status ldvi_expand_config(ldvi_session* session, const char* config_json, char** plans_json) {
  return guarded([&] {
    require(session, "session");
    require(config_json, "config_json");
    require(plans_json, "plans_json");
    json arr = json::array();
    for (auto p : ldvi::parse_config(config_json)) {
      apply_session(*session, p);
      arr.push_back(json::parse(ldvi::plan_to_json(p)));
    }
    *plans_json = dup(arr.dump());
    return LDVI_OK;
  });
}

ldvi_status ldvi_train(ldvi_session* session, const char* plan_json, char** record_json) {
  return guarded([&] {
    require(session, "session");
    require(plan_json, "plan_json");
    require(record_json, "record_json");
    json full = json::parse(ldvi::plan_to_json(ldvi::TrainPlan{}));
    full["data_dir"] = "";
    const json given = json::parse(plan_json);
    if (!given.is_object()) throw std::invalid_argument("plan must be a JSON object");
    for (const auto& [k, v] : given.items()) {
      if (!full.contains(k)) throw std::invalid_argument("unknown plan key '" + k + "'");
      full[k] = v;
    }
    ldvi::TrainPlan plan = ldvi::plan_from_json(full.dump());
    apply_session(*session, plan);
    const ldvi::RunRecord r = ldvi::train(plan);
    *record_json = dup(ldvi::record_to_json(r));
    if (!r.completed()) {
      last_error = r.status + ": " + r.message;
      return LDVI_RUN_INCOMPLETE;
    }
    return LDVI_OK;
  });
}

ldvi_status ldvi_run_grid(ldvi_session* session, const char* config_json, const char* out_path,
                          ldvi_record_callback callback, void* user, size_t* completed, size_t* total) {
  return guarded([&] {
    require(session, "session");
    require(config_json, "config_json");
    auto plans = ldvi::parse_config(config_json);
    for (auto& p : plans) apply_session(*session, p);
    if (total) *total = plans.size();
    if (completed) *completed = 0;
    std::size_t ok = 0;
    std::string first_problem;
    ldvi::run_grid(plans, [&](const ldvi::RunRecord& r) {
      save(out_path, r);
      if (callback) callback(ldvi::record_to_json(r).c_str(), user);
      if (r.completed()) {
        ++ok;
      } else if (first_problem.empty()) {
        first_problem = ldvi::method_name(r.plan.method) + " on " + r.plan.model + " K=" + std::to_string(r.plan.K) +
                        " seed " + std::to_string(r.plan.seed) + " " + r.status + ": " + r.message;
      }
    });
    if (completed) *completed = ok;
    if (ok != plans.size()) {
      last_error = std::to_string(plans.size() - ok) + " of " + std::to_string(plans.size()) +
                   " runs did not complete; first: " + first_problem;
      return LDVI_RUN_INCOMPLETE;
    }
    return LDVI_OK;
  });
}

ldvi_status ldvi_report(const char* ndjson, char** text, char** csv) {
  return guarded([&] {
    require(ndjson, "ndjson");
    const ldvi::Report rep = ldvi::report_table(ldvi::parse_records(ndjson));
    if (text) *text = dup(rep.text);
    if (csv) *csv = dup(rep.csv);
    return LDVI_OK;
  });
}

ldvi_status ldvi_report_file(const char* path, char** text, char** csv) {
  return guarded([&] {
    require(path, "path");
    std::vector<ldvi::RunRecord> recs;
    try {
      recs = ldvi::read_records(path);
    } catch (const std::runtime_error& e) {
      throw IoError(e.what());
    }
    const ldvi::Report rep = ldvi::report_table(recs);
    if (text) *text = dup(rep.text);
    if (csv) *csv = dup(rep.csv);
    return LDVI_OK;
  });
}

ldvi_status ldvi_selfcheck(char** results_json, int* all_passed) {
  return guarded([&] {
    require(results_json, "results_json");
    json arr = json::array();
    bool all = true;
    for (const auto& c : ldvi::run_selfcheck()) {
      all = all && c.passed;
      arr.push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"limit", c.limit},
                     {"detail", c.detail}});
    }
    *results_json = dup(arr.dump());
    if (all_passed) *all_passed = all ? 1 : 0;
    return LDVI_OK;
  });
}

ldvi_status ldvi_reproduce_plainvi(ldvi_session* session, const char* options_json, const char* out_path,
                                   ldvi_record_callback callback, void* user, char** summary_json,
                                   int* all_within) {
  return guarded([&] {
    require(session, "session");
    json opts = json::object();
    if (options_json) opts = json::parse(options_json);
    if (!opts.is_object()) throw std::invalid_argument("options must be a JSON object");
    for (const auto& [k, v] : opts.items()) {
      if (k != "steps" && k != "seeds" && k != "eval_samples" && k != "pretrain_steps" && k != "models") {
        throw std::invalid_argument("unknown option '" + k + "'");
      }
    }
    const auto baselines = ldvi::plainvi_baselines();
    std::vector<std::string> models;
    if (opts.contains("models")) {
      for (const auto& m : opts.at("models")) {
        const auto name = m.get<std::string>();
        bool known = false;
        for (const auto& b : baselines) known = known || b.model == name;
        if (!known) throw std::invalid_argument("no published plain-VI value for model '" + name + "'");
        models.push_back(name);
      }
    } else {
      for (const auto& b : baselines) models.push_back(b.model);
    }
    const std::size_t seeds = opts.value("seeds", std::size_t{1});
    if (seeds == 0) throw std::invalid_argument("seeds must be at least 1");

    json summary = json::array();
    bool all = true;
    bool incomplete = false;
    for (const auto& b : baselines) {
      if (std::find(models.begin(), models.end(), b.model) == models.end()) continue;
      std::vector<double> finals;
      for (std::size_t s = 0; s < seeds; ++s) {
        ldvi::TrainPlan p;
        p.method = ldvi::Method::plain_vi;
        p.model = b.model;
        p.K = 1;
        p.lr = 1e-3;
        p.seed = s;
        p.steps = opts.value("steps", p.steps);
        p.eval_samples = opts.value("eval_samples", p.eval_samples);
        p.pretrain_steps = opts.value("pretrain_steps", p.pretrain_steps);
        apply_session(*session, p);
        const ldvi::RunRecord r = ldvi::train(p);
        save(out_path, r);
        if (callback) callback(ldvi::record_to_json(r).c_str(), user);
        if (!r.completed()) {
          incomplete = true;
          if (last_error.empty()) last_error = b.model + " " + r.status + ": " + r.message;
          continue;
        }
        finals.push_back(r.final_mean);
      }
      json row{{"model", b.model}, {"published", b.published}, {"seeds", finals.size()}};
      if (finals.empty()) {
        row["mean"] = nullptr;
        row["sd"] = nullptr;
        row["difference"] = nullptr;
        row["within"] = false;
        all = false;
      } else {
        const double m = mean_of(finals);
        const bool within = std::abs(m - b.published) <= 2.0;
        row["mean"] = m;
        row["sd"] = sd_of(finals);
        row["difference"] = m - b.published;
        row["within"] = within;
        all = all && within;
      }
      summary.push_back(row);
    }
    if (summary_json) *summary_json = dup(summary.dump());
    if (all_within) *all_within = all ? 1 : 0;
    return incomplete ? LDVI_RUN_INCOMPLETE : LDVI_OK;
  });
}

}  // extern "C"
