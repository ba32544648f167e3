#include "reasonloop/loop_engine.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <sstream>
#include <thread>

#include "reasonloop/errors.hpp"
#include "reasonloop/trace.hpp"
#include "reasonloop/util.hpp"

namespace reasonloop {

int select_stopping_round(
    const std::vector<std::pair<int, VIEScore>>& scored) {
  if (scored.empty())
    throw ValidationError("scored", "stopping-round selection needs at least "
                                    "one scored round");
  int best = scored.front().first;
  double best_overall = scored.front().second.overall;
  for (const auto& [index, vie] : scored) {
    if (vie.overall > best_overall) {  // strict: ties keep the earliest
      best = index;
      best_overall = vie.overall;
    }
  }
  return best;
}

std::vector<double> cumulative_best(const std::vector<double>& scores) {
  if (scores.empty())
    throw ValidationError("scores", "cumulative_best needs a non-empty list");
  std::vector<double> out;
  out.reserve(scores.size());
  double best = scores.front();
  for (double s : scores) {
    best = std::max(best, s);
    out.push_back(best);
  }
  return out;
}

namespace {

std::vector<std::pair<int, VIEScore>> scored_rounds(const EditSession& s) {
  std::vector<std::pair<int, VIEScore>> out;
  for (const auto& r : s.rounds)
    if (r.vie) out.emplace_back(r.index, *r.vie);
  return out;
}

SessionOutcome outcome_of(const EditSession& s, std::int64_t total_ms) {
  SessionOutcome o;
  o.status = s.status;
  o.total_latency_ms = total_ms;
  o.rounds_executed = static_cast<int>(s.rounds.size());
  auto scored = scored_rounds(s);
  o.chosen_round = scored.empty() ? 0 : select_stopping_round(scored);
  o.final_image = s.rounds.at(static_cast<size_t>(o.chosen_round)).generated;
  return o;
}

}  // namespace

std::pair<EditSession, SessionOutcome> run_session(
    const ImageRef& reference, const Instruction& instruction,
    const LoopPolicy& policy, const BackendSet& backends,
    const TemplateSet& templates, std::int64_t seed) {
  validate(policy);
  validate(reference);
  validate(instruction);

  Reasoner reasoner(backends.reasoner, templates);
  Clock& clock = *backends.clock;

  EditSession s;
  s.session_id = uuid_from_seed(static_cast<std::uint64_t>(seed));
  s.reference = reference;
  s.original_instruction = instruction;
  s.policy = policy;
  s.seed = seed;

  std::int64_t session_start = clock.now_ms();

  if (policy.mode != LoopMode::base)
    s.thought = reasoner.think(reference, instruction);
  const Instruction& conditioning = s.thought ? *s.thought : instruction;

  auto run_round = [&](int index, const ImageRef& ref,
                       const Instruction& instr,
                       std::int64_t edit_seed) -> RoundRecord& {
    std::int64_t start = clock.now_ms();
    EditRequest req;
    req.reference = ref;
    req.instruction = instr;
    req.seed = edit_seed;
    RoundRecord r;
    r.index = index;
    r.instruction_used = instr;
    r.generated = backends.generator->edit_image(req);
    r.latency_ms = clock.now_ms() - start;
    s.rounds.push_back(std::move(r));
    return s.rounds.back();
  };

  try {
    switch (policy.mode) {
      case LoopMode::base: {
        run_round(0, reference, instruction, seed);
        s.status = SessionStatus::Succeeded;
        break;
      }
      case LoopMode::thinking: {
        run_round(0, reference, conditioning, seed);
        s.status = SessionStatus::Succeeded;
        break;
      }
      case LoopMode::thinking_reflection: {
        ImageRef current_ref = reference;
        Instruction instr = conditioning;
        s.status = SessionStatus::Stopped;  // until a conclusion says better
        for (int round = 0; round <= policy.max_reflection_rounds; ++round) {
          std::int64_t start = clock.now_ms();
          RoundRecord& r = run_round(round, current_ref, instr, seed + round);
          // Round 0 included: stopping-round selection needs every edit
          // scored. Judging always reflects the user's original request.
          r.vie = reasoner.score_vie(reference, r.generated, instruction);
          if (round == policy.max_reflection_rounds) {
            r.latency_ms = clock.now_ms() - start;
            break;  // reflection budget exhausted
          }
          ReflectOutput refl = reasoner.reflect(
              policy.reflection_variant, reference, r.generated, instruction);
          r.target_description = refl.target_description;
          r.assessment = refl.assessment;
          r.conclusion = refl.conclusion;
          r.latency_ms = clock.now_ms() - start;
          if (refl.conclusion.tag == ConclusionTag::Failed) {
            s.status = SessionStatus::Failed;
            break;
          }
          if (refl.conclusion.tag == ConclusionTag::Success) {
            s.status = SessionStatus::Succeeded;
            if (policy.stop_on_success_tag) break;
            // Nothing left to fix: spend the remaining budget on fresh
            // attempts from the reference, keeping the best-scored round.
            instr = conditioning;
            current_ref = reference;
            continue;
          }
          // #Reflection: the refinement chains onto the generated image.
          instr = *refl.conclusion.refinement_instruction;
          current_ref = r.generated;
        }
        break;
      }
      case LoopMode::reroll: {
        for (int attempt = 0; attempt <= policy.reroll_attempts; ++attempt) {
          std::int64_t start = clock.now_ms();
          RoundRecord& r =
              run_round(attempt, reference, conditioning, seed + attempt);
          r.vie = reasoner.score_vie(reference, r.generated, instruction);
          r.latency_ms = clock.now_ms() - start;
        }
        s.status = SessionStatus::Succeeded;
        break;
      }
    }
  } catch (const Error&) {
    // Aborted round: keep what was scored so far; give up only when nothing
    // usable exists.
    s.status = SessionStatus::Stopped;
    if (scored_rounds(s).empty() && policy.mode != LoopMode::base &&
        policy.mode != LoopMode::thinking)
      throw;
    if (s.rounds.empty()) throw;
  }

  SessionOutcome outcome = outcome_of(s, clock.now_ms() - session_start);
  validate(s);
  return {s, outcome};
}

std::vector<BatchRow> read_manifest(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<BatchRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw ConfigError("manifest line " + std::to_string(lineno) +
                        " is not valid JSON");
    rows.push_back({j.at("image").get<std::string>(),
                    j.at("instruction").get<std::string>()});
  }
  return rows;
}

BatchSummary run_batch(const std::vector<BatchRow>& rows,
                       const LoopPolicy& policy, const BackendSet& backends,
                       const TemplateSet& templates, std::int64_t seed,
                       const std::string& out_dir, int concurrency) {
  std::filesystem::create_directories(out_dir);
  BatchSummary summary;
  summary.n = static_cast<int>(rows.size());
  summary.sessions.resize(rows.size());

  auto work = [&](size_t i) {
    BatchSessionResult& res = summary.sessions[i];
    try {
      ImageRef ref = resolve_image(rows[i].image);
      Instruction instr{rows[i].instruction, InstructionKind::abstract};
      std::int64_t session_seed = static_cast<std::int64_t>(
          mix_hash(static_cast<std::uint64_t>(seed), "session",
                   std::to_string(i)));
      auto [session, outcome] =
          run_session(ref, instr, policy, backends, templates, session_seed);
      res.session_id = session.session_id;
      res.status = outcome.status;
      res.trace_path =
          (std::filesystem::path(out_dir) /
           ("trace-" + session.session_id + ".jsonl")).string();
      write_file(res.trace_path, serialize_trace(session));
      auto scored = scored_rounds(session);
      if (!scored.empty()) {
        res.overall =
            session.rounds[static_cast<size_t>(outcome.chosen_round)]
                .vie->overall;
        res.has_score = true;
      }
      res.completed = true;
    } catch (const std::exception& e) {
      res.error = e.what();
      res.completed = false;
    }
  };

  int jobs = std::max(1, concurrency);
  if (jobs == 1) {
    for (size_t i = 0; i < rows.size(); ++i) work(i);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w)
      workers.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < rows.size();
             i = next.fetch_add(1))
          work(i);
      });
    for (auto& t : workers) t.join();
  }

  double sum = 0.0;
  int scored = 0;
  for (const auto& res : summary.sessions) {
    if (res.completed) ++summary.completed;
    if (res.has_score) {
      sum += res.overall;
      ++scored;
    }
  }
  summary.mean_overall = scored ? sum / scored : 0.0;
  return summary;
}

}  // namespace reasonloop
