// reasonloop: thinking-editing-reflection loop driver.
//
// Subcommands: edit, bench, forge thinking, forge triples, verify-objectives,
// replay. JSON goes to stdout, logs to stderr; exit codes: 0 ok, 1 config/IO
// error, 2 edit concluded #Failed, 3 bench completion below 90%.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <iostream>
#include <random>

#include "reasonloop/data_forge.hpp"
#include "reasonloop/errors.hpp"
#include "reasonloop/loop_engine.hpp"
#include "reasonloop/objectives.hpp"
#include "reasonloop/sim_world.hpp"
#include "reasonloop/trace.hpp"
#include "reasonloop/util.hpp"

namespace rl = reasonloop;

namespace {

struct CommonOpts {
  std::string backend_config;
  std::string template_dir = REASONLOOP_TEMPLATE_DIR;
  std::string out_dir = "out";
  std::int64_t seed = -1;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_backends = true) {
  auto* cfg = cmd->add_option("--backend-config", o.backend_config,
                              "backend config JSON path");
  if (needs_backends) cfg->required();
  cmd->add_option("--templates", o.template_dir, "prompt template directory");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--seed", o.seed, "run seed (default: fresh random, recorded "
                                    "in the output for replay)")
      ->each([&](const std::string&) { o.seed_set = true; });
}

std::int64_t resolve_seed(CommonOpts& o) {
  if (!o.seed_set) {
    std::random_device rd;
    o.seed = static_cast<std::int64_t>(
        (static_cast<std::uint64_t>(rd()) << 32) | rd());
    std::cerr << "seed not given; using " << o.seed << "\n";
  }
  return o.seed;
}

rl::BackendSet open_backends(const CommonOpts& o, rl::BackendConfig* cfg_out) {
  if (!std::filesystem::exists(o.backend_config))
    throw rl::ConfigError("backend config not found: " + o.backend_config);
  rl::BackendConfig cfg = rl::load_backend_config(o.backend_config);
  if (cfg_out) *cfg_out = cfg;
  return rl::make_backends(cfg);
}

std::string image_extension(rl::MediaType m) {
  return m == rl::MediaType::png ? ".png" : ".jpg";
}

rl::LoopPolicy parse_policy(const std::string& mode, int max_reflections,
                            int reroll_attempts, const std::string& variant) {
  rl::LoopPolicy policy;
  policy.mode = rl::loop_mode_from_string(mode);
  policy.max_reflection_rounds =
      policy.mode == rl::LoopMode::reroll ? 0 : max_reflections;
  policy.reroll_attempts =
      policy.mode == rl::LoopMode::reroll ? reroll_attempts : 0;
  policy.reflection_variant = rl::reflection_variant_from_string(variant);
  return policy;
}

int cmd_edit(const CommonOpts& common_in, const std::string& image,
             const std::string& instruction, const std::string& mode,
             int max_reflections, int reroll_attempts,
             const std::string& variant) {
  CommonOpts common = common_in;
  std::int64_t seed = resolve_seed(common);
  rl::BackendSet backends = open_backends(common, nullptr);
  rl::TemplateSet templates = rl::TemplateSet::load_dir(common.template_dir);
  rl::LoopPolicy policy =
      parse_policy(mode, max_reflections, reroll_attempts, variant);

  rl::ImageRef reference = rl::resolve_image(image);
  rl::Instruction request{instruction, rl::InstructionKind::abstract};
  auto [session, outcome] = rl::run_session(reference, request, policy,
                                            backends, templates, seed);

  std::filesystem::path out(common.out_dir);
  std::string trace_path =
      (out / ("trace-" + session.session_id + ".jsonl")).string();
  rl::write_file(trace_path, rl::serialize_trace(session));
  std::string final_path =
      (out / ("final" + image_extension(outcome.final_image.media_type)))
          .string();
  rl::write_file(final_path, rl::fetch_image_bytes(outcome.final_image));

  nlohmann::ordered_json j;
  j["session_id"] = session.session_id;
  j["status"] = rl::to_string(outcome.status);
  j["seed"] = seed;
  j["trace"] = trace_path;
  j["final_image"] = final_path;
  j["chosen_round"] = outcome.chosen_round;
  j["rounds_executed"] = outcome.rounds_executed;
  const auto& chosen =
      session.rounds.at(static_cast<size_t>(outcome.chosen_round));
  j["overall"] = chosen.vie ? nlohmann::ordered_json(rl::fmt4(
                                  chosen.vie->overall))
                            : nlohmann::ordered_json(nullptr);
  std::cout << j.dump(2) << "\n";
  return outcome.status == rl::SessionStatus::Failed ? 2 : 0;
}

int cmd_bench(const CommonOpts& common_in, const std::string& manifest_path,
              const std::string& mode, std::vector<int> budgets,
              const std::string& variant, int concurrency) {
  CommonOpts common = common_in;
  std::int64_t seed = resolve_seed(common);
  rl::BackendSet backends = open_backends(common, nullptr);
  rl::TemplateSet templates = rl::TemplateSet::load_dir(common.template_dir);
  std::vector<rl::BatchRow> rows = rl::read_manifest(manifest_path);
  if (rows.empty()) throw rl::ConfigError("manifest is empty: " + manifest_path);
  if (budgets.empty()) budgets = {2};

  nlohmann::ordered_json summary;
  summary["n"] = rows.size();
  summary["budgets"] = nlohmann::json::array();
  std::vector<double> means;
  int total_sessions = 0, total_completed = 0;
  for (int budget : budgets) {
    rl::LoopPolicy policy = parse_policy(mode, budget, 0, variant);
    std::string dir = (std::filesystem::path(common.out_dir) /
                       ("budget-" + std::to_string(budget)))
                          .string();
    rl::BatchSummary batch = rl::run_batch(rows, policy, backends, templates,
                                           seed, dir, concurrency);
    total_sessions += batch.n;
    total_completed += batch.completed;
    means.push_back(batch.mean_overall);
    nlohmann::ordered_json entry;
    entry["budget"] = budget;
    entry["n"] = batch.n;
    entry["completed"] = batch.completed;
    entry["mean_overall"] = batch.mean_overall;
    summary["budgets"].push_back(entry);
  }
  summary["cumulative_best"] = rl::cumulative_best(means);
  std::string text = summary.dump(2) + "\n";
  rl::write_file(
      (std::filesystem::path(common.out_dir) / "summary.json").string(), text);
  std::cout << text;
  bool healthy = total_completed * 10 >= total_sessions * 9;
  return healthy ? 0 : 3;
}

int cmd_forge_thinking(const CommonOpts& common_in, const std::string& pool_path,
                       int total, int concurrency) {
  CommonOpts common = common_in;
  std::uint64_t seed = static_cast<std::uint64_t>(resolve_seed(common));
  rl::BackendSet backends = open_backends(common, nullptr);
  std::vector<rl::PoolRow> pool = rl::read_pool(pool_path);
  rl::CompositionTarget target;
  target.total = total;
  rl::ForgeReport report = rl::forge_thinking(pool, backends, target, seed,
                                              common.out_dir, concurrency);
  std::cout << report.to_json() << "\n";
  return 0;
}

int cmd_forge_triples(const CommonOpts& common_in, const std::string& pool_path,
                      int editor_count, int irrecoverable_editors,
                      int concurrency) {
  CommonOpts common = common_in;
  std::uint64_t seed = static_cast<std::uint64_t>(resolve_seed(common));
  rl::BackendConfig cfg;
  rl::BackendSet backends;
  std::vector<std::shared_ptr<rl::GeneratorBackend>> editors;
  if (!std::filesystem::exists(common.backend_config))
    throw rl::ConfigError("backend config not found: " + common.backend_config);
  cfg = rl::load_backend_config(common.backend_config);
  if (cfg.mode == rl::BackendMode::simulated) {
    // Build the world by hand so the editor pool can mix configurations
    // over one shared hidden state.
    auto world = rl::SimulatedWorld::create(cfg.world, cfg.world_seed);
    backends.reasoner = world->reasoner();
    backends.clock = std::make_shared<rl::FakeClock>();
    for (int i = 0; i < editor_count; ++i)
      editors.push_back(world->generator());
    rl::WorldConfig stubborn = cfg.world;
    stubborn.correction_probability = 0.0;
    for (int i = 0; i < irrecoverable_editors; ++i)
      editors.push_back(world->generator_with(stubborn));
    backends.generator = editors.front();
  } else {
    if (irrecoverable_editors > 0)
      throw rl::ConfigError(
          "--irrecoverable-editors needs a simulated backend");
    backends = rl::make_backends(cfg);
    for (int i = 0; i < editor_count; ++i)
      editors.push_back(backends.generator);
  }
  rl::TemplateSet templates = rl::TemplateSet::load_dir(common.template_dir);
  std::vector<rl::PoolRow> pool = rl::read_pool(pool_path);
  rl::CompositionTarget target;
  rl::TripleForgeReport report =
      rl::forge_triples(pool, editors, backends, templates, target, seed,
                        common.out_dir, concurrency);
  std::cout << report.to_json() << "\n";
  return 0;
}

int cmd_replay(const std::string& trace_path) {
  rl::EditSession s = rl::parse_trace(rl::read_file(trace_path));
  std::cout << "session " << s.session_id << "  mode "
            << rl::to_string(s.policy.mode) << "  seed " << s.seed << "\n";
  std::cout << "request: " << s.original_instruction.text << "\n";
  if (s.thought) std::cout << "thought: " << s.thought->text << "\n";
  for (const auto& r : s.rounds) {
    std::cout << "round " << r.index << ": edit \"" << r.instruction_used.text
              << "\" -> " << r.generated.uri << " (" << r.latency_ms
              << " ms)\n";
    if (r.target_description)
      std::cout << "  describe: " << *r.target_description << "\n";
    if (r.assessment)
      std::cout << "  assess: consistency " << rl::fmt4(
                       r.assessment->consistency_score)
                << ", conflicts " << r.assessment->conflicts.size() << "\n";
    if (r.conclusion) {
      std::cout << "  conclude: " << rl::to_string(r.conclusion->tag);
      if (r.conclusion->refinement_instruction)
        std::cout << " -> \"" << r.conclusion->refinement_instruction->text
                  << "\"";
      std::cout << "\n";
    }
    if (r.vie)
      std::cout << "  score: sc " << rl::fmt4(r.vie->semantic_consistency)
                << " pq " << rl::fmt4(r.vie->perceptual_quality) << " overall "
                << rl::fmt4(r.vie->overall) << "\n";
  }
  std::cout << "status: " << rl::to_string(s.status) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thinking-editing-reflection loop driver"};
  app.require_subcommand(1);

  CommonOpts edit_opts;
  std::string edit_image, edit_instruction, edit_mode = "thinking_reflection";
  std::string edit_variant = "multi_round";
  int edit_max_reflections = 2, edit_reroll_attempts = 2;
  auto* edit = app.add_subcommand("edit", "run one editing session");
  add_common(edit, edit_opts);
  edit->add_option("--image", edit_image, "reference image path or uri")
      ->required();
  edit->add_option("--instruction", edit_instruction, "editing request")
      ->required();
  edit->add_option("--mode", edit_mode,
                   "base | thinking | thinking_reflection | reroll");
  edit->add_option("--max-reflections", edit_max_reflections,
                   "reflection round budget");
  edit->add_option("--reroll-attempts", edit_reroll_attempts,
                   "extra attempts in reroll mode");
  edit->add_option("--variant", edit_variant,
                   "dual_image | single_image | multi_round");

  CommonOpts bench_opts;
  std::string bench_manifest, bench_mode = "thinking_reflection";
  std::string bench_variant = "multi_round";
  std::vector<int> bench_budgets;
  int bench_concurrency = 1;
  auto* bench = app.add_subcommand("bench", "run a manifest of sessions");
  add_common(bench, bench_opts);
  bench->add_option("--manifest", bench_manifest, "JSONL of {image, instruction}")
      ->required();
  bench->add_option("--mode", bench_mode, "loop mode");
  bench->add_option("--budgets", bench_budgets,
                    "reflection budgets to sweep (default 2)");
  bench->add_option("--variant", bench_variant, "reflection variant");
  bench->add_option("--concurrency", bench_concurrency, "parallel sessions");

  auto* forge = app.add_subcommand("forge", "dataset construction");
  forge->require_subcommand(1);

  CommonOpts ft_opts;
  std::string ft_pool;
  int ft_total = 400, ft_concurrency = 1;
  auto* forge_thinking =
      forge->add_subcommand("thinking", "build abstract-to-concrete pairs");
  add_common(forge_thinking, ft_opts);
  forge_thinking->add_option("--pool", ft_pool, "instruction pool JSONL")
      ->required();
  forge_thinking->add_option("--total", ft_total, "dataset size");
  forge_thinking->add_option("--concurrency", ft_concurrency,
                             "parallel workers");

  CommonOpts tr_opts;
  std::string tr_pool;
  int tr_editors = 1, tr_irrecoverable = 0, tr_concurrency = 1;
  auto* forge_triples =
      forge->add_subcommand("triples", "build reflection triples");
  add_common(forge_triples, tr_opts);
  forge_triples->add_option("--pool", tr_pool, "{id, image, instruction} JSONL")
      ->required();
  forge_triples->add_option("--editors", tr_editors, "round-robin editor count");
  forge_triples->add_option("--irrecoverable-editors", tr_irrecoverable,
                            "extra zero-correction editors (simulated only)");
  forge_triples->add_option("--concurrency", tr_concurrency,
                            "parallel workers");

  auto* verify =
      app.add_subcommand("verify-objectives", "run the loss-kernel checks");

  std::string replay_path;
  auto* replay = app.add_subcommand("replay", "print a trace as a timeline");
  replay->add_option("trace", replay_path, "trace JSONL path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (edit->parsed())
      return cmd_edit(edit_opts, edit_image, edit_instruction, edit_mode,
                      edit_max_reflections, edit_reroll_attempts, edit_variant);
    if (bench->parsed())
      return cmd_bench(bench_opts, bench_manifest, bench_mode, bench_budgets,
                       bench_variant, bench_concurrency);
    if (forge_thinking->parsed())
      return cmd_forge_thinking(ft_opts, ft_pool, ft_total, ft_concurrency);
    if (forge_triples->parsed())
      return cmd_forge_triples(tr_opts, tr_pool, tr_editors, tr_irrecoverable,
                               tr_concurrency);
    if (verify->parsed()) {
      int failures = rl::verify_objectives(std::cout);
      return failures == 0 ? 0 : 1;
    }
    if (replay->parsed()) return cmd_replay(replay_path);
  } catch (const rl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
