#include "reasonloop/scoring.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

#include "reasonloop/errors.hpp"

namespace reasonloop {

std::string to_string(Benchmark b) {
  switch (b) {
    case Benchmark::gedit: return "gedit";
    case Benchmark::kris: return "kris";
    case Benchmark::imgedit: return "imgedit";
  }
  return "gedit";
}

Benchmark benchmark_from_string(const std::string& s) {
  if (s == "gedit") return Benchmark::gedit;
  if (s == "kris") return Benchmark::kris;
  if (s == "imgedit") return Benchmark::imgedit;
  throw ValidationError("benchmark", "unknown benchmark \"" + s + "\"");
}

namespace {

void check_range(double v, double lo, double hi, const char* name) {
  if (!(std::isfinite(v) && v >= lo && v <= hi))
    throw ValidationError(name, "must be in [" + std::to_string(lo) + "," +
                                    std::to_string(hi) + "]");
}

}  // namespace

double vie_overall(double sc, double pq) {
  check_range(sc, 0, 10, "semantic_consistency");
  check_range(pq, 0, 10, "perceptual_quality");
  return std::sqrt(sc * pq);
}

double imgedit_sample_score(double adherence, double quality,
                            double preservation) {
  check_range(adherence, 1, 5, "adherence");
  check_range(quality, 1, 5, "quality");
  check_range(preservation, 1, 5, "preservation");
  return (adherence + std::min(quality, adherence) +
          std::min(preservation, adherence)) / 3.0;
}

double kris_sample_score(double visual_consistency, double visual_quality,
                         double instruction_following,
                         double knowledge_plausibility) {
  check_range(visual_consistency, 1, 5, "visual_consistency");
  check_range(visual_quality, 1, 5, "visual_quality");
  check_range(instruction_following, 1, 5, "instruction_following");
  check_range(knowledge_plausibility, 1, 5, "knowledge_plausibility");
  double mean = (visual_consistency + visual_quality + instruction_following +
                 knowledge_plausibility) / 4.0;
  return 25.0 * (mean - 1.0);
}

namespace {

DimStats stats_of(const std::vector<double>& xs) {
  DimStats s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    double var = ss / static_cast<double>(xs.size() - 1);
    s.stderr_ = std::sqrt(var / static_cast<double>(xs.size()));
  }
  return s;
}

}  // namespace

AggregateReport aggregate(const std::vector<JudgeRecord>& records) {
  if (records.empty())
    throw ValidationError("records", "aggregate needs at least one record");
  AggregateReport report;
  report.benchmark = records.front().benchmark;
  report.n = static_cast<int>(records.size());

  std::map<std::string, std::vector<double>> per_dim;
  std::vector<double> overall;
  for (const auto& r : records) {
    if (r.benchmark != report.benchmark)
      throw ValidationError("records", "mixed benchmarks in one aggregate");
    double lo = r.scale == JudgeScale::one_to_five ? 1.0 : 0.0;
    double hi = r.scale == JudgeScale::one_to_five ? 5.0 : 10.0;
    for (const auto& [name, v] : r.dims) {
      check_range(v, lo, hi, name.c_str());
      per_dim[name].push_back(v);
    }
    overall.push_back(r.sample_score);
  }
  for (const auto& [name, xs] : per_dim) report.dims[name] = stats_of(xs);
  report.overall = stats_of(overall);
  return report;
}

std::string AggregateReport::to_json() const {
  nlohmann::ordered_json j;
  j["benchmark"] = reasonloop::to_string(benchmark);
  j["n"] = n;
  j["dims"] = nlohmann::ordered_json::object();
  for (const auto& [name, s] : dims)  // std::map keeps key order stable
    j["dims"][name] = {{"mean", s.mean}, {"stderr", s.stderr_}};
  j["overall"] = {{"mean", overall.mean}, {"stderr", overall.stderr_}};
  return j.dump(2);
}

}  // namespace reasonloop
