#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "reasonloop/backends.hpp"
#include "reasonloop/core_types.hpp"
#include "reasonloop/reasoner.hpp"

namespace reasonloop {

struct SessionOutcome {
  ImageRef final_image;
  int chosen_round = 0;
  SessionStatus status = SessionStatus::Running;
  std::int64_t total_latency_ms = 0;
  int rounds_executed = 0;
};

// Round index with the maximal overall score; ties break to the earliest
// index. Throws ValidationError on an empty list.
int select_stopping_round(const std::vector<std::pair<int, VIEScore>>& scored);

// Running maximum: out[i] = max(scores[0..i]).
std::vector<double> cumulative_best(const std::vector<double>& scores);

// Drives one thinking-editing-reflection session (or the re-roll baseline)
// over the given backends and returns the full trace-able session plus its
// outcome. Behavior per policy.mode:
//   base                - one edit with the original instruction, no
//                         reasoner calls
//   thinking            - think, then one edit
//   thinking_reflection - think, edit, then reflect/edit cycles up to the
//                         round budget; every edit is scored; #Success stops
//                         early (when stop_on_success_tag), #Failed stops
//                         the loop with status Failed; the final image is
//                         the stopping round's
//   reroll              - think, then reroll_attempts+1 independent edits
//                         with fresh seeds, keeping the best-scored one
// Backend errors mid-round abort the round; the session ends Stopped and the
// best already-scored round is still returned when one exists.
std::pair<EditSession, SessionOutcome> run_session(
    const ImageRef& reference, const Instruction& instruction,
    const LoopPolicy& policy, const BackendSet& backends,
    const TemplateSet& templates, std::int64_t seed);

// --- batch runner ----------------------------------------------------------

struct BatchRow {
  std::string image;  // path or uri
  std::string instruction;
};

struct BatchSessionResult {
  std::string session_id;
  std::string trace_path;
  SessionStatus status = SessionStatus::Running;
  double overall = 0.0;  // 0 when the session produced no score
  bool has_score = false;
  bool completed = false;
  std::string error;
};

struct BatchSummary {
  int n = 0;
  int completed = 0;
  double mean_overall = 0.0;
  std::vector<BatchSessionResult> sessions;
};

std::vector<BatchRow> read_manifest(const std::string& path);

// Runs one session per manifest row, writing a trace file per session into
// out_dir. Sessions run on up to `concurrency` workers; results keep input
// order so runs are reproducible. Session seeds derive from (seed, row).
BatchSummary run_batch(const std::vector<BatchRow>& rows,
                       const LoopPolicy& policy, const BackendSet& backends,
                       const TemplateSet& templates, std::int64_t seed,
                       const std::string& out_dir, int concurrency = 1);

}  // namespace reasonloop
