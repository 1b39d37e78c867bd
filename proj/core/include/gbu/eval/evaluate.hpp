#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gbu/common/json.hpp"
#include "gbu/data/record.hpp"
#include "gbu/eval/metrics.hpp"
#include "gbu/gate/gate_map.hpp"
#include "gbu/model/model.hpp"

namespace gbu::eval {

enum class Aggregation { kSegment, kNight };
Aggregation parse_aggregation(const std::string& text);
std::string_view to_string(Aggregation mode);

/// One night's prediction in SpO2 percentage points.
struct NightPrediction {
  std::string subject_id;
  std::string dataset_id;
  std::vector<double> y;
  std::vector<double> y_hat;
  std::vector<std::uint8_t> stages;
  std::vector<int> gate;  // empty unless gated
};

/// Eval-mode forward; gated models gate on the predicted inaccessible state.
NightPrediction predict_night(const model::Model<float>& model, const gate::GateMap* gate, const data::Record& record,
                              bool normalize = true, const std::string& v_var = "gender");

struct Aggregate {
  double corr = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t segments = 0;
  std::size_t excluded = 0;  // flat segments left out of the Corr mean
  std::size_t nights = 0;
};

struct NightScore {
  std::string subject_id;
  std::string dataset_id;
  Aggregate score;  // means over the night's segments
};

struct SeriesStats {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0, mean = 0.0;
  std::size_t count = 0;
};
SeriesStats series_stats(std::vector<double> values);

struct GroupStats {
  SeriesStats truth;
  SeriesStats prediction;
};

struct GroupDistribution {
  std::string variable;
  std::map<int, GroupStats> groups;
};

/// Per-group quartiles of ground truth and prediction over every second.
/// kUnknownGroup if a record lacks the variable.
GroupDistribution group_distribution(std::span<const data::Record> records,
                                     std::span<const NightPrediction> predictions, const std::string& group_var);

struct EvalReport {
  Aggregation aggregation = Aggregation::kSegment;
  /// Keyed by dataset_id; segment means and night means are both kept.
  std::map<std::string, Aggregate> by_dataset;
  std::map<std::string, Aggregate> by_dataset_night;
  Aggregate overall;
  Aggregate overall_night;
  std::vector<NightScore> nights;
  std::optional<GroupDistribution> groups;
  std::string config_hash;
  std::string checkpoint_id;

  /// The aggregate selected by `aggregation`.
  [[nodiscard]] const Aggregate& headline() const;
};

struct EvalOptions {
  Aggregation aggregation = Aggregation::kSegment;
  bool normalize = true;
  std::string v_var = "gender";
  std::optional<std::string> group_var;
};

/// Scores predictions against their records. Nights are matched by position.
EvalReport score(std::span<const NightPrediction> predictions, const EvalOptions& options);

/// predict_night for every record, then score. kEmptyInput for an empty set.
EvalReport evaluate(const model::Model<float>& model, const gate::GateMap* gate, std::span<const data::Record> records,
                    const EvalOptions& options = {});

Json to_json(const Aggregate& a);
Json to_json(const EvalReport& report);

/// TSV: t, y_true, y_hat_raw, y_hat_rounded (half up), stage, gate_status (0 when ungated).
/// A non-empty comment goes first as a "# " line; read_dump skips such lines.
void dump_predictions(const NightPrediction& prediction, const std::filesystem::path& path,
                      const std::string& comment = "");

struct DumpRow {
  std::size_t t = 0;
  double y_true = 0.0;
  double y_hat_raw = 0.0;
  long y_hat_rounded = 0;
  int stage = 0;
  int gate_status = 0;
};
std::vector<DumpRow> read_dump(const std::filesystem::path& path);

/// Nearest integer, halves rounded up.
long round_half_up(double x);

}  // namespace gbu::eval
