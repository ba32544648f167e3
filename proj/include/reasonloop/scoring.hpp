#pragma once

#include <map>
#include <string>
#include <vector>

namespace reasonloop {

enum class Benchmark { gedit, kris, imgedit };
std::string to_string(Benchmark b);
Benchmark benchmark_from_string(const std::string& s);

enum class JudgeScale { zero_to_ten, one_to_five };

struct JudgeRecord {
  Benchmark benchmark = Benchmark::gedit;
  std::map<std::string, double> dims;
  JudgeScale scale = JudgeScale::zero_to_ten;
  double sample_score = 0.0;
};

// Geometric mean of semantic consistency and perceptual quality, both on
// [0,10]. Throws ValidationError out of range.
double vie_overall(double sc, double pq);

// ImgEdit convention: quality and preservation are capped by instruction
// adherence before averaging. All three on [1,5].
double imgedit_sample_score(double adherence, double quality,
                            double preservation);

// KRIS convention: mean of the four 1-5 dims rescaled to [0,100].
double kris_sample_score(double visual_consistency, double visual_quality,
                         double instruction_following,
                         double knowledge_plausibility);

struct DimStats {
  double mean = 0.0;
  double stderr_ = 0.0;
};

struct AggregateReport {
  Benchmark benchmark = Benchmark::gedit;
  int n = 0;
  std::map<std::string, DimStats> dims;
  DimStats overall;

  // Deterministically ordered JSON per the report schema.
  std::string to_json() const;
};

// Mean and standard error per dimension and for the sample scores. All
// records must share one benchmark; empty input is an error.
AggregateReport aggregate(const std::vector<JudgeRecord>& records);

}  // namespace reasonloop
