#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "reasonloop/core_types.hpp"
#include "reasonloop/errors.hpp"
#include "reasonloop/trace.hpp"
#include "reasonloop/util.hpp"

using namespace reasonloop;

namespace {

// Random invariant-satisfying sessions. All scores are drawn on the 1e-4
// grid the trace format stores, so round-trips are exact.
struct SessionGen {
  std::mt19937_64 rng;
  explicit SessionGen(std::uint64_t seed) : rng(seed) {}

  double grid_score() {
    std::uniform_int_distribution<int> d(0, 100000);
    return d(rng) / 10000.0;
  }

  std::string word() {
    static const char* words[] = {"sky",  "boat", "red",   "vivid",
                                  "leaf", "cat",  "shore", "lamp"};
    std::uniform_int_distribution<int> d(0, 7);
    return words[d(rng)];
  }

  ImageRef image() {
    std::string bytes = std::string("\x89PNG\r\n\x1a\n", 8) + word();
    return image_ref_from_bytes("mem://" + word(), bytes);
  }

  Instruction instruction(InstructionKind kind = InstructionKind::concrete) {
    return {word() + " " + word(), kind};
  }

  bool coin() { return std::uniform_int_distribution<int>(0, 1)(rng) == 1; }

  EditSession session() {
    EditSession s;
    s.session_id = uuid_from_seed(rng());
    s.reference = image();
    s.original_instruction = instruction(InstructionKind::abstract);
    if (coin()) s.thought = instruction();
    s.seed = static_cast<std::int64_t>(rng() & 0x7fffffff);
    s.policy.mode = LoopMode::thinking_reflection;
    std::uniform_int_distribution<int> nrounds(0, 3);
    int n = nrounds(rng);
    s.policy.max_reflection_rounds = 3;
    for (int i = 0; i < n; ++i) {
      RoundRecord r;
      r.index = i;
      r.instruction_used = instruction();
      r.generated = image();
      r.latency_ms = std::uniform_int_distribution<int>(0, 5000)(rng);
      if (coin()) r.target_description = "target " + word();
      if (coin()) {
        Assessment a;
        a.consistency_score = grid_score();
        if (coin()) a.conflicts = {word()};
        if (coin()) a.omissions = {word(), word()};
        a.rationale = word();
        r.assessment = a;
      }
      if (coin()) {
        ReflectionConclusion c;
        int pick = std::uniform_int_distribution<int>(0, 2)(rng);
        c.tag = pick == 0   ? ConclusionTag::Success
                : pick == 1 ? ConclusionTag::Reflect
                            : ConclusionTag::Failed;
        c.reasoning = word() + " " + word();
        if (c.tag == ConclusionTag::Reflect)
          c.refinement_instruction = instruction();
        r.conclusion = c;
      }
      if (coin()) r.vie = VIEScore::from_axes(grid_score(), grid_score());
      s.rounds.push_back(r);
    }
    s.status = s.rounds.empty()
                   ? (coin() ? SessionStatus::Running : SessionStatus::Stopped)
                   : (coin() ? SessionStatus::Succeeded
                             : SessionStatus::Stopped);
    return s;
  }
};

}  // namespace

TEST_CASE("trace round-trip property over generated sessions") {
  SessionGen gen(20240817);
  for (int i = 0; i < 200; ++i) {
    EditSession s = gen.session();
    std::string bytes = serialize_trace(s);
    EditSession back = parse_trace(bytes);
    // VIEScore overall is recomputed on parse; quantize before comparing.
    for (auto& r : s.rounds)
      if (r.vie) r.vie->overall = round4(r.vie->overall);
    for (auto& r : back.rounds)
      if (r.vie) r.vie->overall = round4(r.vie->overall);
    CHECK(back == s);
  }
}

TEST_CASE("empty-rounds session round-trips") {
  SessionGen gen(7);
  EditSession s = gen.session();
  s.rounds.clear();
  s.status = SessionStatus::Running;
  std::string bytes = serialize_trace(s);
  // header + think only
  CHECK(std::count(bytes.begin(), bytes.end(), '\n') == 2);
  CHECK(parse_trace(bytes) == s);
}

TEST_CASE("conclusion tags serialize with the hash preserved") {
  CHECK(to_string(ConclusionTag::Success) == "#Success");
  CHECK(to_string(ConclusionTag::Reflect) == "#Reflection");
  CHECK(to_string(ConclusionTag::Failed) == "#Failed");
  CHECK(conclusion_tag_from_string("#Reflection") == ConclusionTag::Reflect);
  CHECK_THROWS_AS(conclusion_tag_from_string("Reflection"), ValidationError);

  SessionGen gen(11);
  EditSession s = gen.session();
  s.rounds.resize(1);
  s.rounds[0].index = 0;
  ReflectionConclusion c;
  c.tag = ConclusionTag::Failed;
  c.reasoning = "broken";
  s.rounds[0].conclusion = c;
  s.status = SessionStatus::Failed;
  CHECK(serialize_trace(s).find("\"#Failed\"") != std::string::npos);
}

TEST_CASE("reflect conclusion without refinement fails validation") {
  SessionGen gen(13);
  EditSession s = gen.session();
  if (s.rounds.empty()) {
    RoundRecord r;
    r.index = 0;
    r.instruction_used = gen.instruction();
    r.generated = gen.image();
    s.rounds.push_back(r);
    s.status = SessionStatus::Stopped;
  }
  ReflectionConclusion c;
  c.tag = ConclusionTag::Reflect;
  c.reasoning = "needs more";
  c.refinement_instruction.reset();
  s.rounds[0].conclusion = c;
  try {
    serialize_trace(s);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.field_path().find("refinement_instruction") != std::string::npos);
  }
}

TEST_CASE("success conclusion with refinement fails validation") {
  ReflectionConclusion c;
  c.tag = ConclusionTag::Success;
  c.reasoning = "done";
  c.refinement_instruction = Instruction{"again", InstructionKind::concrete};
  CHECK_THROWS_AS(validate(c), ValidationError);
}

TEST_CASE("truncated trailing line reports its line number") {
  SessionGen gen(17);
  EditSession s = gen.session();
  std::string bytes = serialize_trace(s);
  // Chop the closing half of the final line.
  std::string truncated = bytes.substr(0, bytes.size() - 15);
  int lines = static_cast<int>(
      std::count(truncated.begin(), truncated.end(), '\n')) + 1;
  try {
    parse_trace(truncated);
    FAIL("expected TraceParseError");
  } catch (const TraceParseError& e) {
    CHECK(e.line() == lines);
  }
}

TEST_CASE("unsupported version is a distinct error") {
  SessionGen gen(19);
  std::string bytes = serialize_trace(gen.session());
  auto pos = bytes.find("reasonloop/1");
  REQUIRE(pos != std::string::npos);
  bytes.replace(pos, 12, "reasonloop/99");
  CHECK_THROWS_AS(parse_trace(bytes), UnsupportedVersionError);
}

TEST_CASE("stored overall must match the recomputed geometric mean") {
  SessionGen gen(23);
  EditSession s = gen.session();
  if (s.rounds.empty()) {
    RoundRecord r;
    r.index = 0;
    r.instruction_used = gen.instruction();
    r.generated = gen.image();
    s.rounds.push_back(r);
    s.status = SessionStatus::Stopped;
  }
  s.rounds[0].vie = VIEScore::from_axes(9.0, 4.0);
  std::string bytes = serialize_trace(s);
  auto pos = bytes.find("\"overall\":\"6.0000\"");
  REQUIRE(pos != std::string::npos);
  bytes.replace(pos, 18, "\"overall\":\"6.5000\"");
  CHECK_THROWS_AS(parse_trace(bytes), TraceParseError);
}

TEST_CASE("vie score law and validation") {
  VIEScore v = VIEScore::from_axes(9.0, 4.0);
  CHECK(v.overall == doctest::Approx(6.0).epsilon(1e-12));
  CHECK_THROWS_AS(VIEScore::from_axes(-1.0, 4.0), ValidationError);
  VIEScore bad = v;
  bad.overall = 7.0;
  CHECK_THROWS_AS(validate(bad), ValidationError);
}

TEST_CASE("instruction and policy validation") {
  CHECK_THROWS_AS(validate(Instruction{"   ", InstructionKind::abstract}),
                  ValidationError);
  LoopPolicy p;
  p.mode = LoopMode::reroll;
  p.max_reflection_rounds = 1;
  CHECK_THROWS_AS(validate(p), ValidationError);
  p.max_reflection_rounds = 0;
  p.reroll_attempts = 2;
  CHECK_NOTHROW(validate(p));
}

TEST_CASE("image_ref_from_bytes sniffs media type") {
  std::string png = std::string("\x89PNG\r\n\x1a\n", 8) + "x";
  CHECK(image_ref_from_bytes("a.png", png).media_type == MediaType::png);
  std::string jpg = std::string("\xff\xd8\xff", 3) + "x";
  CHECK(image_ref_from_bytes("a.jpg", jpg).media_type == MediaType::jpeg);
  CHECK_THROWS_AS(image_ref_from_bytes("a.gif", "GIF89a"), ValidationError);
}

TEST_CASE("session round budget depends on mode") {
  SessionGen gen(29);
  EditSession s = gen.session();
  s.policy.mode = LoopMode::thinking_reflection;
  s.policy.max_reflection_rounds = 0;
  s.rounds.clear();
  for (int i = 0; i < 2; ++i) {
    RoundRecord r;
    r.index = i;
    r.instruction_used = gen.instruction();
    r.generated = gen.image();
    s.rounds.push_back(r);
  }
  s.status = SessionStatus::Stopped;
  CHECK_THROWS_AS(validate(s), ValidationError);
  s.policy.mode = LoopMode::reroll;
  s.policy.reroll_attempts = 1;  // cap = attempts + 1 = 2
  CHECK_NOTHROW(validate(s));
}
