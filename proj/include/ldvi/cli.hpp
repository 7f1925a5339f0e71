#pragma once

// Run records on disk, grid configuration and table reports.

#include <map>
#include <string>
#include <vector>

#include "ldvi/trainer.hpp"

namespace ldvi {

/// One-line JSON object. Doubles are written in shortest round-trip form and
/// non-finite values as the strings "nan", "inf" and "-inf", so
/// record_from_json(record_to_json(r)) == r field for field.
std::string record_to_json(const RunRecord& r);
RunRecord record_from_json(const std::string& line);

/// record_to_json without the wall time: identical plans give identical bytes.
std::string canonical_record(const RunRecord& r);

std::string plan_to_json(const TrainPlan& p);
TrainPlan plan_from_json(const std::string& text);

/// Newline-delimited JSON, one record per line, appended.
void append_record(const std::string& path, const RunRecord& r);
std::vector<RunRecord> read_records(const std::string& path);
std::vector<RunRecord> parse_records(const std::string& ndjson);

/// Learning rates tried when a config does not name any.
std::vector<double> default_lr_grid();

/// Expands a JSON grid config into plans. Keys: method, model, K, lr, seeds
/// (count or list), steps, batch, eval_samples, pretrain_steps, pretrain_lr,
/// hidden, init_step, init_friction, clip_norm, divergence_floor,
/// curve_every, threads, data_dir, preset ("desk" or "long"). method, model,
/// K and lr take a scalar or a list; the plan list is their Cartesian product
/// with the seeds, ordered model, method, K, lr, seed. Unknown keys, unknown
/// names and empty or non-positive K lists throw std::invalid_argument.
std::vector<TrainPlan> parse_config(const std::string& json_text);

struct ReportCell {
  bool present = false;
  double lr = 0.0;
  std::size_t seeds = 0;
  double mean = 0.0;        // over seeds of the final ELBO
  double sd = 0.0;          // sample sd over seeds (0 for one seed)
  double eval_stderr = 0.0; // mean evaluation standard error
  bool winner = false;
};

struct ReportTable {
  std::string model;
  std::vector<std::size_t> Ks;
  std::vector<std::string> methods;
  /// cells[row][col] for Ks[row], methods[col].
  std::vector<std::vector<ReportCell>> cells;
};

/// Best-lr cells per model (rows K, columns method). Winners are every cell
/// whose mean is within one combined sd, sqrt(sd_a² + sd_b²), of the row
/// maximum. Throws std::invalid_argument for an empty record list.
std::vector<ReportTable> build_report(const std::vector<RunRecord>& records);

/// Text form of a cell ("-114.40 ± 0.02", winners suffixed with '*', "—" if
/// missing). The text table and CSV both use it.
std::string format_cell(const ReportCell& c);

struct Report {
  std::string text;
  std::string csv;
};

Report report_table(const std::vector<RunRecord>& records);

/// Published plain-VI ELBOs for the four benchmark models.
struct PlainViBaseline {
  std::string model;
  double published = 0.0;
};
std::vector<PlainViBaseline> plainvi_baselines();

}  // namespace ldvi
