#include "ldvi/cli.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ldvi {

using nlohmann::json;

namespace {

json num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

double to_num(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw std::invalid_argument("expected a number, got \"" + s + "\"");
  }
  return j.get<double>();
}

json plan_json(const TrainPlan& p) {
  return json{{"method", method_name(p.method)},
              {"model", p.model},
              {"K", p.K},
              {"lr", num(p.lr)},
              {"steps", p.steps},
              {"batch", p.batch},
              {"eval_samples", p.eval_samples},
              {"seed", p.seed},
              {"pretrain_steps", p.pretrain_steps},
              {"pretrain_lr", num(p.pretrain_lr)},
              {"hidden", p.hidden},
              {"init_step", num(p.init_step)},
              {"init_friction", num(p.init_friction)},
              {"clip_norm", num(p.clip_norm)},
              {"divergence_floor", num(p.divergence_floor)},
              {"curve_every", p.curve_every},
              {"threads", p.threads},
              {"data_dir", p.data_dir}};
}

TrainPlan plan_of(const json& j) {
  TrainPlan p;
  p.method = parse_method(j.at("method").get<std::string>());
  p.model = j.at("model").get<std::string>();
  p.K = j.at("K").get<std::size_t>();
  p.lr = to_num(j.at("lr"));
  p.steps = j.at("steps").get<std::size_t>();
  p.batch = j.at("batch").get<std::size_t>();
  p.eval_samples = j.at("eval_samples").get<std::size_t>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.pretrain_steps = j.at("pretrain_steps").get<std::size_t>();
  p.pretrain_lr = to_num(j.at("pretrain_lr"));
  p.hidden = j.at("hidden").get<std::size_t>();
  p.init_step = to_num(j.at("init_step"));
  p.init_friction = to_num(j.at("init_friction"));
  p.clip_norm = to_num(j.at("clip_norm"));
  p.divergence_floor = to_num(j.at("divergence_floor"));
  p.curve_every = j.at("curve_every").get<std::size_t>();
  p.threads = j.at("threads").get<std::size_t>();
  p.data_dir = j.at("data_dir").get<std::string>();
  return p;
}

json record_json(const RunRecord& r, bool with_time) {
  json curve = json::array();
  for (const auto& c : r.curve) curve.push_back(json::array({c.step, num(c.elbo)}));
  json learned = json::object();
  for (const auto& [k, v] : r.learned) {
    json a = json::array();
    for (double x : v) a.push_back(num(x));
    learned[k] = a;
  }
  json j{{"schema_version", r.schema_version},
         {"status", r.status},
         {"message", r.message},
         {"plan", plan_json(r.plan)},
         {"metadata", r.metadata},
         {"curve", curve},
         {"final_mean", num(r.final_mean)},
         {"final_stderr", num(r.final_stderr)},
         {"final_n", r.final_n},
         {"pretrain_elbo", num(r.pretrain_elbo)},
         {"learned", learned},
         {"skipped_steps", r.skipped_steps},
         {"clipped_steps", r.clipped_steps}};
  if (with_time) j["wall_time_s"] = num(r.wall_time_s);
  return j;
}

double sample_sd(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string shortest(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

// Width in code points, so "±" and "—" count once.
std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string pad(const std::string& s, std::size_t width) {
  const std::size_t n = display_width(s);
  return n >= width ? s : std::string(width - n, ' ') + s;
}

template <class T>
std::vector<T> scalar_or_list(const json& j, const char* key) {
  std::vector<T> out;
  if (j.is_array()) {
    for (const auto& e : j) out.push_back(e.get<T>());
  } else {
    out.push_back(j.get<T>());
  }
  if (out.empty()) throw std::invalid_argument(std::string("config key '") + key + "' is an empty list");
  return out;
}

}  // namespace

std::string record_to_json(const RunRecord& r) { return record_json(r, true).dump(); }

std::string canonical_record(const RunRecord& r) { return record_json(r, false).dump(); }

RunRecord record_from_json(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed record: ") + e.what());
  }
  try {
    RunRecord r;
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != RunRecord::kSchemaVersion) {
      throw std::invalid_argument("unsupported record schema version " + std::to_string(r.schema_version));
    }
    r.status = j.at("status").get<std::string>();
    r.message = j.at("message").get<std::string>();
    r.plan = plan_of(j.at("plan"));
    r.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
    for (const auto& c : j.at("curve")) r.curve.push_back({c.at(0).get<std::size_t>(), to_num(c.at(1))});
    r.final_mean = to_num(j.at("final_mean"));
    r.final_stderr = to_num(j.at("final_stderr"));
    r.final_n = j.at("final_n").get<std::size_t>();
    r.pretrain_elbo = to_num(j.at("pretrain_elbo"));
    for (const auto& [k, v] : j.at("learned").items()) {
      auto& dst = r.learned[k];
      for (const auto& x : v) dst.push_back(to_num(x));
    }
    r.skipped_steps = j.at("skipped_steps").get<std::size_t>();
    r.clipped_steps = j.at("clipped_steps").get<std::size_t>();
    if (j.contains("wall_time_s")) r.wall_time_s = to_num(j.at("wall_time_s"));
    return r;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed record: ") + e.what());
  }
}

std::string plan_to_json(const TrainPlan& p) { return plan_json(p).dump(); }

TrainPlan plan_from_json(const std::string& text) {
  try {
    return plan_of(json::parse(text));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed plan: ") + e.what());
  }
}

void append_record(const std::string& path, const RunRecord& r) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open " + path + " for appending");
  out << record_to_json(r) << '\n';
  if (!out) throw std::runtime_error("write to " + path + " failed");
}

std::vector<RunRecord> parse_records(const std::string& ndjson) {
  std::vector<RunRecord> out;
  std::istringstream in(ndjson);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(line));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::vector<RunRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_records(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

std::vector<double> default_lr_grid() { return {1e-3, 1e-4, 1e-5}; }

std::vector<TrainPlan> parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  static const std::set<std::string> known = {
      "method",      "model",          "K",         "lr",        "seeds",       "steps",
      "batch",       "eval_samples",   "pretrain_steps", "pretrain_lr", "hidden", "init_step",
      "init_friction", "clip_norm",    "divergence_floor", "curve_every", "threads", "data_dir",
      "preset"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw std::invalid_argument("unknown config key '" + k + "'");
  }
  for (const char* k : {"method", "model", "K"}) {
    if (!j.contains(k)) throw std::invalid_argument(std::string("config is missing '") + k + "'");
  }

  try {
    TrainPlan base;
    if (j.contains("preset")) {
      const auto preset = j.at("preset").get<std::string>();
      if (preset == "long") {
        base.steps = 150000;
      } else if (preset != "desk") {
        throw std::invalid_argument("unknown preset '" + preset + "'; valid presets: desk, long");
      }
    }
    auto set_size = [&](const char* k, std::size_t& dst) {
      if (j.contains(k)) dst = j.at(k).get<std::size_t>();
    };
    auto set_num = [&](const char* k, double& dst) {
      if (j.contains(k)) dst = to_num(j.at(k));
    };
    set_size("steps", base.steps);
    set_size("batch", base.batch);
    set_size("eval_samples", base.eval_samples);
    set_size("pretrain_steps", base.pretrain_steps);
    set_num("pretrain_lr", base.pretrain_lr);
    set_size("hidden", base.hidden);
    set_num("init_step", base.init_step);
    set_num("init_friction", base.init_friction);
    set_num("clip_norm", base.clip_norm);
    set_num("divergence_floor", base.divergence_floor);
    set_size("curve_every", base.curve_every);
    set_size("threads", base.threads);
    if (j.contains("data_dir")) base.data_dir = j.at("data_dir").get<std::string>();
    if (base.steps == 0) throw std::invalid_argument("steps must be at least 1");

    std::vector<Method> methods;
    for (const auto& m : scalar_or_list<std::string>(j.at("method"), "method")) methods.push_back(parse_method(m));
    const auto models = scalar_or_list<std::string>(j.at("model"), "model");
    for (const auto& m : models) {
      if (m.rfind("toy", 0) == 0) {
        make_target(m, "");  // validates the dimension suffix
      } else if (m != "ionosphere" && m != "sonar" && m != "brownian" && m != "lorenz" && m != "seeds") {
        std::string valid;
        for (const auto& n : model_names()) valid += (valid.empty() ? "" : ", ") + n;
        throw std::invalid_argument("unknown model '" + m + "'; valid models: " + valid);
      }
    }
    std::vector<std::size_t> Ks;
    const json& kj = j.at("K");
    if (kj.is_array() && kj.empty()) throw std::invalid_argument("K list is empty");
    for (const auto& k : kj.is_array() ? kj : json::array({kj})) {
      if (!k.is_number_integer() || k.get<long long>() < 1) {
        throw std::invalid_argument("K entries must be positive integers, got " + k.dump());
      }
      Ks.push_back(k.get<std::size_t>());
    }
    std::vector<double> lrs = default_lr_grid();
    if (j.contains("lr")) {
      lrs.clear();
      const json& lj = j.at("lr");
      if (lj.is_array() && lj.empty()) throw std::invalid_argument("lr list is empty");
      for (const auto& l : lj.is_array() ? lj : json::array({lj})) lrs.push_back(to_num(l));
      for (double l : lrs) {
        if (!(l > 0.0)) throw std::invalid_argument("learning rates must be positive");
      }
    }
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    if (j.contains("seeds")) {
      const json& sj = j.at("seeds");
      seeds.clear();
      if (sj.is_array()) {
        for (const auto& s : sj) seeds.push_back(s.get<std::uint64_t>());
      } else {
        const auto n = sj.get<std::uint64_t>();
        for (std::uint64_t s = 0; s < n; ++s) seeds.push_back(s);
      }
      if (seeds.empty()) throw std::invalid_argument("seeds must name at least one seed");
    }

    std::vector<TrainPlan> plans;
    for (const auto& model : models) {
      for (Method m : methods) {
        for (std::size_t K : Ks) {
          for (double lr : lrs) {
            for (std::uint64_t seed : seeds) {
              TrainPlan p = base;
              p.model = model;
              p.method = m;
              p.K = K;
              p.lr = lr;
              p.seed = seed;
              plans.push_back(p);
            }
          }
        }
      }
    }
    return plans;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad config value: ") + e.what());
  }
}

std::vector<ReportTable> build_report(const std::vector<RunRecord>& records) {
  if (records.empty()) throw std::invalid_argument("report needs at least one record");
  const std::vector<RunRecord> best = select_best_lr(records);

  std::map<std::string, ReportTable> tables;
  for (const auto& r : records) {
    auto& t = tables[r.plan.model];
    t.model = r.plan.model;
    if (std::find(t.Ks.begin(), t.Ks.end(), r.plan.K) == t.Ks.end()) t.Ks.push_back(r.plan.K);
    const auto name = method_name(r.plan.method);
    if (std::find(t.methods.begin(), t.methods.end(), name) == t.methods.end()) t.methods.push_back(name);
  }
  for (auto& [model, t] : tables) {
    std::sort(t.Ks.begin(), t.Ks.end());
    const auto order = method_names();
    std::sort(t.methods.begin(), t.methods.end(), [&](const std::string& a, const std::string& b) {
      return std::find(order.begin(), order.end(), a) < std::find(order.begin(), order.end(), b);
    });
    t.cells.assign(t.Ks.size(), std::vector<ReportCell>(t.methods.size()));
  }

  std::map<std::tuple<std::string, std::size_t, std::string>, std::vector<const RunRecord*>> groups;
  for (const auto& r : best) groups[{r.plan.model, r.plan.K, method_name(r.plan.method)}].push_back(&r);
  for (const auto& [key, runs] : groups) {
    const auto& [model, K, method] = key;
    auto& t = tables.at(model);
    const auto row = static_cast<std::size_t>(std::find(t.Ks.begin(), t.Ks.end(), K) - t.Ks.begin());
    const auto col =
        static_cast<std::size_t>(std::find(t.methods.begin(), t.methods.end(), method) - t.methods.begin());
    ReportCell& c = t.cells[row][col];
    std::vector<double> means;
    double se = 0.0;
    for (const auto* r : runs) {
      means.push_back(r->final_mean);
      se += r->final_stderr;
    }
    c.present = true;
    c.lr = runs.front()->plan.lr;
    c.seeds = runs.size();
    for (double m : means) c.mean += m;
    c.mean /= static_cast<double>(means.size());
    c.sd = sample_sd(means);
    c.eval_stderr = se / static_cast<double>(runs.size());
  }

  std::vector<ReportTable> out;
  for (auto& [model, t] : tables) {
    for (auto& row : t.cells) {
      const ReportCell* top = nullptr;
      for (const auto& c : row) {
        if (c.present && (!top || c.mean > top->mean)) top = &c;
      }
      if (!top) continue;
      const double top_mean = top->mean, top_sd = top->sd;
      for (auto& c : row) {
        c.winner = c.present && top_mean - c.mean <= std::sqrt(top_sd * top_sd + c.sd * c.sd);
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::string format_cell(const ReportCell& c) {
  if (!c.present) return "—";
  return fixed(c.mean, 2) + " ± " + fixed(c.sd, 2) + (c.winner ? "*" : "");
}

Report report_table(const std::vector<RunRecord>& records) {
  const auto tables = build_report(records);
  Report rep;
  rep.csv = "model,K,method,lr,seeds,mean,sd,eval_stderr,winner,cell\n";
  std::ostringstream text;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const auto& t = tables[i];
    if (i) text << '\n';
    text << t.model << '\n';
    std::size_t width = 6;
    for (const auto& m : t.methods) width = std::max(width, m.size());
    for (const auto& row : t.cells) {
      for (const auto& c : row) width = std::max(width, display_width(format_cell(c)));
    }
    width += 2;
    text << pad("K", 6);
    for (const auto& m : t.methods) text << pad(m, width);
    text << '\n';
    for (std::size_t r = 0; r < t.Ks.size(); ++r) {
      text << pad(std::to_string(t.Ks[r]), 6);
      for (std::size_t c = 0; c < t.methods.size(); ++c) {
        const ReportCell& cell = t.cells[r][c];
        text << pad(format_cell(cell), width);
        rep.csv += t.model + "," + std::to_string(t.Ks[r]) + "," + t.methods[c] + ",";
        if (cell.present) {
          rep.csv += shortest(cell.lr) + "," + std::to_string(cell.seeds) + "," + shortest(cell.mean) + "," +
                     shortest(cell.sd) + "," + shortest(cell.eval_stderr) + "," + (cell.winner ? "1" : "0");
        } else {
          rep.csv += ",0,,,,0";
        }
        rep.csv += "," + format_cell(cell) + "\n";
      }
      text << '\n';
    }
  }
  text << "\nmean ± sd over seeds at the best learning rate; * marks the row winner "
          "(ties within one combined sd).\n";
  rep.text = text.str();
  return rep;
}

std::vector<PlainViBaseline> plainvi_baselines() {
  return {{"ionosphere", -124.1}, {"sonar", -138.6}, {"seeds", -77.1}, {"brownian", -4.4}};
}

}  // namespace ldvi
