#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <memory>
#include <random>

#include "reasonloop/data_forge.hpp"
#include "reasonloop/errors.hpp"
#include "reasonloop/sim_world.hpp"
#include "reasonloop/util.hpp"

using namespace reasonloop;

namespace {

TemplateSet templates() { return TemplateSet::load_dir(REASONLOOP_TEMPLATE_DIR); }

class CountingGenerator final : public GeneratorBackend {
 public:
  explicit CountingGenerator(std::shared_ptr<GeneratorBackend> inner)
      : inner_(std::move(inner)) {}
  ImageRef edit_image(const EditRequest& request) override {
    ++calls;
    return inner_->edit_image(request);
  }
  int calls = 0;

 private:
  std::shared_ptr<GeneratorBackend> inner_;
};

class FailingGenerator final : public GeneratorBackend {
 public:
  ImageRef edit_image(const EditRequest&) override {
    throw TransportError("fail", 3, "connection refused");
  }
};

Instruction abstract(const std::string& t) {
  return {t, InstructionKind::abstract};
}

ThinkingPair accepted_pair(PairProvenance prov, const std::string& tag) {
  ThinkingPair p;
  if (prov == PairProvenance::passthrough) {
    p = passthrough_pair(abstract("keep " + tag + "."));
  } else {
    p.abstract_instruction = abstract("abstract " + tag);
    p.concrete_instruction = {"concrete " + tag, InstructionKind::concrete};
    p.provenance = prov;
  }
  p.review = ReviewState::accepted;
  return p;
}

std::vector<SourcePair> sim_sources(int n) {
  std::vector<SourcePair> out;
  for (int i = 0; i < n; ++i)
    out.push_back({"src" + std::to_string(i),
                   resolve_image("sim://pool" + std::to_string(i)),
                   {"edit item " + std::to_string(i), InstructionKind::concrete}});
  return out;
}

}  // namespace

TEST_CASE("largest remainder allocation") {
  CHECK(largest_remainder(400, {0.31, 0.44, 0.25}) ==
        std::vector<int>{124, 176, 100});
  CHECK(largest_remainder(4, {0.25, 0.5, 0.25}) == std::vector<int>{1, 2, 1});
  CHECK(largest_remainder(10, {0.33, 0.33, 0.34}) ==
        std::vector<int>{3, 3, 4});

  // Independent oracle: floor quotas, then biggest remainders win.
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    int total = static_cast<int>(rng() % 500) + 1;
    double a = (rng() % 1000) / 1000.0, b = (1.0 - a) * (rng() % 1000) / 1000.0;
    std::vector<double> fr = {a, b, 1.0 - a - b};
    auto got = largest_remainder(total, fr);
    int sum = got[0] + got[1] + got[2];
    CHECK(sum == total);
    for (int i = 0; i < 3; ++i) {
      double quota = total * fr[i];
      CHECK(got[i] >= static_cast<int>(std::floor(quota)));
      CHECK(got[i] <= static_cast<int>(std::floor(quota)) + 1);
    }
  }
}

TEST_CASE("classify parses the constrained label") {
  ScriptedReasoner mock;
  mock.when("Remove the red car.", {"simple"})
      .when("vintage feel", {"complex"})
      .when("[task:classify]", {"hmm, unclear", "total garbage"});
  CHECK(classify_instruction(abstract("Remove the red car."), mock) ==
        InstructionClass::simple);
  CHECK(classify_instruction(
            abstract("Make the image more dramatic with a vintage feel"),
            mock) == InstructionClass::complex);
  CHECK_THROWS_AS(classify_instruction(abstract("mystery request"), mock),
                  ProtocolError);
}

TEST_CASE("two-way annotation") {
  ScriptedReasoner mock;
  mock.when("[task:annotate_decompose]",
            {"Render the leaves yellow and desiccate the leaf tips."})
      .when("[task:annotate_abstract]", {"make it pop"});

  ThinkingPair complex = annotate_pair(
      abstract("symptoms of potassium deficiency in leaves"),
      InstructionClass::complex, mock);
  CHECK(complex.provenance == PairProvenance::simplified_from_complex);
  CHECK(complex.concrete_instruction.text ==
        "Render the leaves yellow and desiccate the leaf tips.");
  CHECK(complex.abstract_instruction.text ==
        "symptoms of potassium deficiency in leaves");

  ThinkingPair simple = annotate_pair(abstract("Increase the image contrast."),
                                      InstructionClass::simple, mock);
  CHECK(simple.provenance == PairProvenance::abstracted_from_simple);
  CHECK(simple.abstract_instruction.text == "make it pop");
  CHECK(simple.concrete_instruction.text == "Increase the image contrast.");

  ThinkingPair pass = passthrough_pair(abstract("Crop to a square."));
  CHECK(pass.provenance == PairProvenance::passthrough);
  CHECK(pass.abstract_instruction.text == pass.concrete_instruction.text);
  CHECK_NOTHROW(validate(pass));
  pass.abstract_instruction.text = "different";
  CHECK_THROWS_AS(validate(pass), ValidationError);
}

TEST_CASE("review verdicts") {
  ScriptedReasoner accepting;
  accepting.when("[task:review]", {"accept"});
  ThinkingPair good = accepted_pair(PairProvenance::abstracted_from_simple, "a");
  CHECK(review_pair(good, accepting) == ReviewState::accepted);

  ScriptedReasoner rejecting;
  rejecting.when("[task:review]", {"reject"});
  CHECK(review_pair(good, rejecting) == ReviewState::rejected);

  // Broken pairs never reach the model: the empty scripted mock would throw.
  ScriptedReasoner untouchable;
  ThinkingPair broken = good;
  broken.concrete_instruction.text = "   ";
  CHECK(review_pair(broken, untouchable) == ReviewState::rejected);
}

TEST_CASE("compose hits the target composition") {
  std::vector<ThinkingPair> pool;
  for (int i = 0; i < 200; ++i) {
    pool.push_back(accepted_pair(PairProvenance::simplified_from_complex,
                                 "s" + std::to_string(i)));
    pool.push_back(accepted_pair(PairProvenance::abstracted_from_simple,
                                 "a" + std::to_string(i)));
    pool.push_back(
        accepted_pair(PairProvenance::passthrough, "p" + std::to_string(i)));
  }
  CompositionTarget target;  // 400 at 0.31/0.44/0.25
  ThinkingComposition out = compose_thinking_dataset(pool, target, 42);
  CHECK(out.pairs.size() == 400);
  CHECK(out.counts == std::array<int, 3>{124, 176, 100});
  for (int b = 0; b < 3; ++b) {
    double frac = out.counts[b] / 400.0;
    double want = b == 0 ? 0.31 : b == 1 ? 0.44 : 0.25;
    CHECK(std::abs(frac - want) <= 0.02);
  }
  // Determinism: same pool and seed give the same shuffled selection.
  ThinkingComposition again = compose_thinking_dataset(pool, target, 42);
  CHECK(again.pairs == out.pairs);
  ThinkingComposition other = compose_thinking_dataset(pool, target, 43);
  CHECK(other.pairs != out.pairs);
}

TEST_CASE("compose shortfall names the deficient bucket") {
  std::vector<ThinkingPair> pool;
  for (int i = 0; i < 200; ++i) {
    pool.push_back(accepted_pair(PairProvenance::simplified_from_complex,
                                 "s" + std::to_string(i)));
    pool.push_back(accepted_pair(PairProvenance::abstracted_from_simple,
                                 "a" + std::to_string(i)));
  }
  CompositionTarget target;
  try {
    compose_thinking_dataset(pool, target, 1);
    FAIL("expected ShortfallError");
  } catch (const ShortfallError& e) {
    CHECK(std::string(e.what()).find("passthrough") != std::string::npos);
    CHECK(std::string(e.what()).find("100") != std::string::npos);
  }
  // Rejected pairs don't count towards buckets.
  std::vector<ThinkingPair> rejected = pool;
  for (auto& p : rejected) p.review = ReviewState::rejected;
  CHECK_THROWS_AS(compose_thinking_dataset(rejected, target, 1),
                  ShortfallError);
}

TEST_CASE("composition target validation") {
  CompositionTarget t;
  t.fraction_passthrough = 0.3;  // sums to 1.05
  CHECK_THROWS_AS(validate(t), ValidationError);
  t = CompositionTarget{};
  t.weight_failed = 0.0;
  CHECK_THROWS_AS(validate(t), ValidationError);
  t = CompositionTarget{};
  t.total = 0;
  CHECK_THROWS_AS(validate(t), ValidationError);
}

TEST_CASE("triples: round-robin editor assignment") {
  WorldConfig cfg;  // flaw_probability 0: every item is a success
  auto world = SimulatedWorld::create(cfg, 3);
  std::vector<std::shared_ptr<CountingGenerator>> counters;
  std::vector<std::shared_ptr<GeneratorBackend>> editors;
  for (int i = 0; i < 4; ++i) {
    counters.push_back(
        std::make_shared<CountingGenerator>(world->generator()));
    editors.push_back(counters.back());
  }
  Reasoner reflector(world->reasoner(), templates());
  TripleBuildResult res = build_reflection_triples(
      sim_sources(8), editors, reflector, CompositionTarget{}, 7);
  for (const auto& c : counters) CHECK(c->calls == 2);
  CHECK(res.produced_success == 8);
  CHECK(res.skipped == 0);
  CHECK_FALSE(res.ratio_achieved);  // no reflection or failed items exist
  CHECK(res.retained.size() == 8);
  for (const auto& t : res.retained) {
    CHECK(t.outcome == TripleOutcome::success);
    CHECK(t.generated.sha256 == t.corrected.sha256);
    CHECK_FALSE(t.reflection_instruction.has_value());
  }
}

TEST_CASE("triples: reflection items get a corrective edit") {
  WorldConfig cfg;
  cfg.flaw_probability = 1.0;
  cfg.correction_probability = 1.0;
  auto world = SimulatedWorld::create(cfg, 9);
  std::vector<std::shared_ptr<GeneratorBackend>> editors = {world->generator()};
  Reasoner reflector(world->reasoner(), templates());
  TripleBuildResult res = build_reflection_triples(
      sim_sources(5), editors, reflector, CompositionTarget{}, 1);
  CHECK(res.produced_reflection == 5);
  for (const auto& t : res.retained) {
    CHECK(t.outcome == TripleOutcome::reflection);
    REQUIRE(t.reflection_instruction.has_value());
    CHECK(t.reflection_instruction->text.find("flaw-") != std::string::npos);
    CHECK(t.generated.sha256 != t.corrected.sha256);
    CHECK(world->flaws_of(t.corrected.uri.substr(6)).empty());
  }
}

TEST_CASE("triples: editor failures are skipped and counted") {
  WorldConfig cfg;
  auto world = SimulatedWorld::create(cfg, 2);
  std::vector<std::shared_ptr<GeneratorBackend>> editors = {
      world->generator(), std::make_shared<FailingGenerator>()};
  Reasoner reflector(world->reasoner(), templates());
  TripleBuildResult res = build_reflection_triples(
      sim_sources(6), editors, reflector, CompositionTarget{}, 1);
  CHECK(res.skipped == 3);  // every odd-indexed source hit the broken editor
  CHECK(res.retained.size() == 3);
}

TEST_CASE("triples: deterministic given (sources, seed)") {
  WorldConfig cfg;
  cfg.flaw_probability = 0.5;
  cfg.correction_probability = 0.9;
  auto build = [&] {
    auto world = SimulatedWorld::create(cfg, 15);
    std::vector<std::shared_ptr<GeneratorBackend>> editors = {
        world->generator(), world->generator_with([&] {
          WorldConfig stubborn = cfg;
          stubborn.correction_probability = 0.0;
          return stubborn;
        }())};
    Reasoner reflector(world->reasoner(), templates());
    return build_reflection_triples(sim_sources(30), editors, reflector,
                                    CompositionTarget{}, 4);
  };
  TripleBuildResult a = build();
  TripleBuildResult b = build();
  REQUIRE(a.retained.size() == b.retained.size());
  for (size_t i = 0; i < a.retained.size(); ++i) {
    CHECK(a.retained[i].source_id == b.retained[i].source_id);
    CHECK(a.retained[i].corrected == b.retained[i].corrected);
  }
}

TEST_CASE("viescore tagging") {
  WorldConfig cfg;  // noise 0, base quality 8, no flaws
  auto world = SimulatedWorld::create(cfg, 21);
  std::vector<std::shared_ptr<GeneratorBackend>> editors = {world->generator()};
  Reasoner reflector(world->reasoner(), templates());
  TripleBuildResult res = build_reflection_triples(
      sim_sources(4), editors, reflector, CompositionTarget{}, 2);

  SUBCASE("simulated judge reproduces the world's quality function") {
    Reasoner judge(world->reasoner(), templates());
    CHECK(tag_viescores(res.retained, judge) == 0);
    for (const auto& t : res.retained)
      CHECK(t.vie.overall == doctest::Approx(8.0));
  }

  SUBCASE("scripted judge values are taken, overall recomputed") {
    auto mock = std::make_shared<ScriptedReasoner>();
    mock->when("[task:score]",
               {"```json\n{\"semantic_consistency\": 8, "
                "\"perceptual_quality\": 8}\n```"});
    Reasoner judge(mock, templates());
    CHECK(tag_viescores(res.retained, judge) == 0);
    CHECK(res.retained.front().vie.overall == doctest::Approx(8.0));
  }

  SUBCASE("out-of-range judge output rejects the triple") {
    auto mock = std::make_shared<ScriptedReasoner>();
    mock->when("[task:score]",
               {"```json\n{\"semantic_consistency\": -1, "
                "\"perceptual_quality\": 8}\n```"});
    Reasoner judge(mock, templates());
    size_t before = res.retained.size();
    CHECK(tag_viescores(res.retained, judge) == static_cast<int>(before));
    CHECK(res.retained.empty());
  }
}

TEST_CASE("thinking pipeline is deterministic on the simulated annotator") {
  std::vector<PoolRow> pool;
  for (int i = 0; i < 30; ++i) {
    if (i % 2 == 0)
      pool.push_back({"s" + std::to_string(i), "",
                      "Remove item " + std::to_string(i) + "."});
    else
      pool.push_back({"c" + std::to_string(i), "",
                      "give the whole picture a sense of quiet wonder and "
                      "early morning softness number " + std::to_string(i)});
  }
  WorldConfig cfg;
  auto run = [&](const std::string& dir) {
    std::filesystem::remove_all(dir);
    auto world = SimulatedWorld::create(cfg, 8);
    BackendSet backends{world->reasoner(), world->generator(),
                        std::make_shared<FakeClock>()};
    CompositionTarget target;
    target.total = 30;
    forge_thinking(pool, backends, target, 6, dir);
    return read_file(dir + "/thinking_pairs.jsonl");
  };
  std::string base = (std::filesystem::temp_directory_path() / "rl_forge")
                         .string();
  std::string a = run(base + "_a");
  std::string b = run(base + "_b");
  CHECK(a == b);
  CHECK_FALSE(a.empty());
}

TEST_CASE("review queue verdicts survive reruns") {
  std::vector<PoolRow> pool = {{"p1", "", "Remove the ladder."}};
  WorldConfig cfg;
  std::string dir =
      (std::filesystem::temp_directory_path() / "rl_forge_queue").string();
  std::filesystem::remove_all(dir);
  auto run = [&] {
    auto world = SimulatedWorld::create(cfg, 8);
    BackendSet backends{world->reasoner(), world->generator(),
                        std::make_shared<FakeClock>()};
    CompositionTarget target;
    target.total = 1;
    target.fraction_simplified = 0.0;
    target.fraction_abstracted = 1.0;
    target.fraction_passthrough = 0.0;
    return forge_thinking(pool, backends, target, 3, dir);
  };
  ForgeReport first = run();
  CHECK(first.counts[1] == 1);
  // A human rejects every queued pair between runs.
  std::string queue = read_file(dir + "/review_queue.jsonl");
  size_t pos = 0, hits = 0;
  while ((pos = queue.find("\"review\":\"accepted\"", pos)) !=
         std::string::npos) {
    queue.replace(pos, 19, "\"review\":\"rejected\"");
    ++hits;
  }
  REQUIRE(hits >= 1);
  write_file(dir + "/review_queue.jsonl", queue);
  CHECK_THROWS_AS(run(), ShortfallError);  // the only candidate is now vetoed
}

TEST_CASE("pool reader") {
  std::string path =
      (std::filesystem::temp_directory_path() / "rl_pool.jsonl").string();
  write_file(path,
             "{\"id\":\"a\",\"instruction\":\"x\"}\n"
             "{\"instruction\":\"y\",\"image\":\"sim://i\"}\n");
  auto rows = read_pool(path);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].id == "a");
  CHECK(rows[1].id == "row-2");
  CHECK(rows[1].image == "sim://i");
  write_file(path, "{\"id\":\"a\"}\n");
  CHECK_THROWS_AS(read_pool(path), ConfigError);
}
