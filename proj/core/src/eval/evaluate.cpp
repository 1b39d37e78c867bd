#include "gbu/eval/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gbu::eval {

namespace {

struct Accumulator {
  double corr = 0.0, mae = 0.0, rmse = 0.0;
  std::size_t segments = 0, excluded = 0, nights = 0;

  void add(const Metrics& m) {
    mae += m.mae;
    rmse += m.rmse;
    if (m.corr_defined) corr += m.corr;
    else ++excluded;
    ++segments;
  }

  void add_night(const Aggregate& night) {
    if (night.segments == 0) return;
    mae += night.mae;
    rmse += night.rmse;
    // a night whose segments are all flat has no Corr to contribute
    if (night.excluded < night.segments) corr += night.corr;
    else ++excluded;
    segments += night.segments;
    ++nights;
  }

  [[nodiscard]] Aggregate segment_mean(std::size_t night_count) const {
    Aggregate a;
    a.segments = segments;
    a.excluded = excluded;
    a.nights = night_count;
    if (segments == 0) return a;
    a.mae = mae / static_cast<double>(segments);
    a.rmse = rmse / static_cast<double>(segments);
    if (segments > excluded) a.corr = corr / static_cast<double>(segments - excluded);
    return a;
  }

  [[nodiscard]] Aggregate night_mean(std::size_t total_excluded) const {
    Aggregate a;
    a.segments = segments;
    a.excluded = total_excluded;
    a.nights = nights;
    if (nights == 0) return a;
    a.mae = mae / static_cast<double>(nights);
    a.rmse = rmse / static_cast<double>(nights);
    if (nights > excluded) a.corr = corr / static_cast<double>(nights - excluded);
    return a;
  }
};

bool night_less(const NightPrediction* a, const NightPrediction* b) {
  if (a->dataset_id != b->dataset_id) return a->dataset_id < b->dataset_id;
  if (a->subject_id != b->subject_id) return a->subject_id < b->subject_id;
  if (a->y != b->y) return a->y < b->y;
  return a->y_hat < b->y_hat;
}

}  // namespace

Aggregation parse_aggregation(const std::string& text) {
  if (text == "segment") return Aggregation::kSegment;
  if (text == "night") return Aggregation::kNight;
  fail(ErrorCode::kConfig, "unknown aggregation '" + text + "' (segment | night)");
}

std::string_view to_string(Aggregation mode) { return mode == Aggregation::kSegment ? "segment" : "night"; }

NightPrediction predict_night(const model::Model<float>& model, const gate::GateMap* gate, const data::Record& record,
                              bool normalize, const std::string& v_var) {
  const auto& config = model.config;
  const int v = record.variable(v_var);
  const auto x = model::make_input<float>(config, data::model_breathing(record, normalize), v);
  nn::NoGradGuard no_grad;
  const model::ForwardContext ctx{nn::Mode::kEval, nullptr};
  const auto out = model::forward(model, x, v, std::span<const std::uint8_t>(record.stages), gate, ctx);
  NightPrediction p;
  p.subject_id = record.subject_id;
  p.dataset_id = record.dataset_id;
  p.y.assign(record.spo2.begin(), record.spo2.end());
  p.y_hat.resize(out.y_hat.numel());
  for (std::size_t t = 0; t < p.y_hat.size(); ++t) p.y_hat[t] = data::denormalize_spo2(out.y_hat.at(t));
  p.stages = record.stages;
  p.gate = out.gate;
  return p;
}

SeriesStats series_stats(std::vector<double> values) {
  require(!values.empty(), ErrorCode::kEmptyInput, "statistics of an empty series");
  std::sort(values.begin(), values.end());
  SeriesStats s;
  s.count = values.size();
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile(values, 0.25);
  s.median = quantile(values, 0.5);
  s.q3 = quantile(values, 0.75);
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  return s;
}

GroupDistribution group_distribution(std::span<const data::Record> records,
                                     std::span<const NightPrediction> predictions, const std::string& group_var) {
  require(records.size() == predictions.size(), ErrorCode::kDimension, "group_distribution: one prediction per record");
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> values;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int g = records[i].variable(group_var);
    auto& [truth, pred] = values[g];
    truth.insert(truth.end(), predictions[i].y.begin(), predictions[i].y.end());
    pred.insert(pred.end(), predictions[i].y_hat.begin(), predictions[i].y_hat.end());
  }
  GroupDistribution out{group_var, {}};
  for (auto& [g, tp] : values) out.groups[g] = {series_stats(std::move(tp.first)), series_stats(std::move(tp.second))};
  return out;
}

const Aggregate& EvalReport::headline() const {
  return aggregation == Aggregation::kSegment ? overall : overall_night;
}

EvalReport score(std::span<const NightPrediction> predictions, const EvalOptions& options) {
  require(!predictions.empty(), ErrorCode::kEmptyInput, "evaluation set is empty");
  std::vector<const NightPrediction*> order;
  for (const auto& p : predictions) order.push_back(&p);
  std::sort(order.begin(), order.end(), night_less);

  EvalReport report;
  report.aggregation = options.aggregation;
  Accumulator overall, overall_night;
  std::map<std::string, Accumulator> by_dataset, by_dataset_night;
  std::map<std::string, std::size_t> nights_per_dataset;
  for (const auto* p : order) {
    Accumulator night;
    for (const auto& [b, e] : segment(p->y.size())) {
      const auto m = metrics(std::span<const double>(p->y_hat).subspan(b, e - b),
                             std::span<const double>(p->y).subspan(b, e - b));
      night.add(m);
      overall.add(m);
      by_dataset[p->dataset_id].add(m);
    }
    const Aggregate night_score = night.segment_mean(1);
    report.nights.push_back({p->subject_id, p->dataset_id, night_score});
    overall_night.add_night(night_score);
    by_dataset_night[p->dataset_id].add_night(night_score);
    ++nights_per_dataset[p->dataset_id];
  }
  report.overall = overall.segment_mean(order.size());
  report.overall_night = overall_night.night_mean(overall.excluded);
  for (const auto& [id, acc] : by_dataset) {
    report.by_dataset[id] = acc.segment_mean(nights_per_dataset[id]);
    report.by_dataset_night[id] = by_dataset_night[id].night_mean(acc.excluded);
  }
  return report;
}

EvalReport evaluate(const model::Model<float>& model, const gate::GateMap* gate, std::span<const data::Record> records,
                    const EvalOptions& options) {
  require(!records.empty(), ErrorCode::kEmptyInput, "evaluation set is empty");
  std::vector<NightPrediction> predictions;
  predictions.reserve(records.size());
  for (const auto& r : records) predictions.push_back(predict_night(model, gate, r, options.normalize, options.v_var));
  EvalReport report = score(predictions, options);
  if (options.group_var) report.groups = group_distribution(records, predictions, *options.group_var);
  report.config_hash = model::config_hash(model::to_json(model.config));
  return report;
}

Json to_json(const Aggregate& a) {
  return Json{{"corr", a.corr},         {"mae", a.mae},       {"rmse", a.rmse},
              {"segments", a.segments}, {"excluded_flat", a.excluded}, {"nights", a.nights}};
}

namespace {

Json stats_json(const SeriesStats& s) {
  return Json{{"min", s.min},       {"q1", s.q1},     {"median", s.median}, {"q3", s.q3},
              {"max", s.max},       {"mean", s.mean}, {"count", s.count}};
}

}  // namespace

Json to_json(const EvalReport& r) {
  Json datasets = Json::object();
  for (const auto& [id, a] : r.by_dataset)
    datasets[id] = Json{{"segment_mean", to_json(a)}, {"night_mean", to_json(r.by_dataset_night.at(id))}};
  Json nights = Json::array();
  for (const auto& n : r.nights)
    nights.push_back(Json{{"subject_id", n.subject_id}, {"dataset_id", n.dataset_id}, {"score", to_json(n.score)}});
  Json out{{"aggregation", std::string(to_string(r.aggregation))},
           {"headline", to_json(r.headline())},
           {"overall", Json{{"segment_mean", to_json(r.overall)}, {"night_mean", to_json(r.overall_night)}}},
           {"datasets", datasets},
           {"nights", nights},
           {"config_hash", r.config_hash},
           {"checkpoint_id", r.checkpoint_id}};
  if (r.groups) {
    Json groups = Json::object();
    for (const auto& [g, s] : r.groups->groups)
      groups[std::to_string(g)] = Json{{"ground_truth", stats_json(s.truth)}, {"prediction", stats_json(s.prediction)}};
    out["group_distribution"] = Json{{"variable", r.groups->variable}, {"groups", groups}};
  }
  return out;
}

long round_half_up(double x) { return static_cast<long>(std::floor(x + 0.5)); }

void dump_predictions(const NightPrediction& p, const std::filesystem::path& path, const std::string& comment) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot write " + path.string());
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "t\ty_true\ty_hat_raw\ty_hat_rounded\tstage\tgate_status\n";
  char line[160];
  for (std::size_t t = 0; t < p.y.size(); ++t) {
    const int gate = p.gate.empty() ? 0 : p.gate[t];
    std::snprintf(line, sizeof(line), "%zu\t%.9g\t%.17g\t%ld\t%d\t%d\n", t, p.y[t], p.y_hat[t],
                  round_half_up(p.y_hat[t]), static_cast<int>(p.stages[t]), gate);
    out << line;
  }
  require(out.good(), ErrorCode::kIo, "write failed for " + path.string());
}

std::vector<DumpRow> read_dump(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  while (std::getline(in, line) && line.starts_with('#')) {
  }
  require(line == "t\ty_true\ty_hat_raw\ty_hat_rounded\tstage\tgate_status", ErrorCode::kConfig,
          path.string() + ": unexpected dump header");
  std::vector<DumpRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    DumpRow r;
    fields >> r.t >> r.y_true >> r.y_hat_raw >> r.y_hat_rounded >> r.stage >> r.gate_status;
    require(!fields.fail(), ErrorCode::kConfig, path.string() + ": malformed row '" + line + "'");
    rows.push_back(r);
  }
  return rows;
}

}  // namespace gbu::eval
