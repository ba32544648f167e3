#include "reasonloop/data_forge.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "reasonloop/errors.hpp"
#include "reasonloop/util.hpp"

namespace reasonloop {

std::string to_string(PairProvenance p) {
  switch (p) {
    case PairProvenance::simplified_from_complex: return "simplified_from_complex";
    case PairProvenance::abstracted_from_simple: return "abstracted_from_simple";
    case PairProvenance::passthrough: return "passthrough";
  }
  return "passthrough";
}

std::string to_string(ReviewState r) {
  switch (r) {
    case ReviewState::accepted: return "accepted";
    case ReviewState::rejected: return "rejected";
    case ReviewState::pending: return "pending";
  }
  return "pending";
}

std::string to_string(TripleOutcome o) {
  switch (o) {
    case TripleOutcome::success: return "success";
    case TripleOutcome::reflection: return "reflection";
    case TripleOutcome::failed: return "failed";
  }
  return "success";
}

void validate(const ThinkingPair& p, const std::string& path) {
  validate(p.abstract_instruction, path + ".abstract_instruction");
  validate(p.concrete_instruction, path + ".concrete_instruction");
  if (p.provenance == PairProvenance::passthrough &&
      p.abstract_instruction.text != p.concrete_instruction.text)
    throw ValidationError(path + ".provenance",
                          "passthrough pairs must have abstract = concrete");
}

void validate(const ReflectionTriple& t, const std::string& path) {
  validate(t.input, path + ".input");
  validate(t.edit_instruction, path + ".edit_instruction");
  validate(t.generated, path + ".generated");
  validate(t.corrected, path + ".corrected");
  if (t.outcome == TripleOutcome::success &&
      t.generated.sha256 != t.corrected.sha256)
    throw ValidationError(path + ".corrected",
                          "success triples must keep corrected = generated");
  if (t.outcome == TripleOutcome::reflection && !t.reflection_instruction)
    throw ValidationError(path + ".reflection_instruction",
                          "reflection triples need a refinement instruction");
}

void validate(const CompositionTarget& t, const std::string& path) {
  if (t.total <= 0)
    throw ValidationError(path + ".total", "must be positive");
  double sum =
      t.fraction_simplified + t.fraction_abstracted + t.fraction_passthrough;
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError(path + ".fractions", "must sum to 1");
  for (double f : {t.fraction_simplified, t.fraction_abstracted,
                   t.fraction_passthrough})
    if (f < 0.0)
      throw ValidationError(path + ".fractions", "must be non-negative");
  for (double w : {t.weight_success, t.weight_reflection, t.weight_failed})
    if (!(w > 0.0))
      throw ValidationError(path + ".triple_ratio", "weights must be positive");
}

std::vector<int> largest_remainder(int total,
                                   const std::vector<double>& fractions) {
  if (total < 0) throw ValidationError("total", "must be non-negative");
  std::vector<int> counts(fractions.size(), 0);
  std::vector<double> remainders(fractions.size(), 0.0);
  int assigned = 0;
  for (size_t i = 0; i < fractions.size(); ++i) {
    double quota = static_cast<double>(total) * fractions[i];
    counts[i] = static_cast<int>(std::floor(quota));
    remainders[i] = quota - std::floor(quota);
    assigned += counts[i];
  }
  std::vector<size_t> order(fractions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return remainders[a] > remainders[b];
  });
  for (size_t i = 0; assigned < total; ++i, ++assigned)
    ++counts[order[i % order.size()]];
  return counts;
}

// --- annotator protocol ----------------------------------------------------

namespace {

const char* kClassifyPrompt =
    "[task:classify]\n"
    "Decide whether the editing request below is already a clear, concrete "
    "command (answer: simple) or abstract and multifaceted (answer: complex). "
    "Answer with exactly one word.\n"
    "Request: ";

const char* kDecomposePrompt =
    "[task:annotate_decompose]\n"
    "Rewrite the abstract editing request below as one concrete, directly "
    "executable instruction describing the visual changes to make. Answer "
    "with the instruction only.\n"
    "Request: ";

const char* kAbstractPrompt =
    "[task:annotate_abstract]\n"
    "Invent a short, abstract phrasing a casual user might say that the "
    "concrete editing instruction below would satisfy. Answer with the "
    "phrasing only.\n"
    "Request: ";

const char* kReviewPromptHead =
    "[task:review]\n"
    "Verify the abstract-to-concrete pair below: the concrete side must be a "
    "faithful, executable refinement of the abstract side. Answer with "
    "exactly one word: accept or reject.\n";

ChatRequest text_request(const std::string& prompt) {
  ChatRequest r;
  ChatMessage m;
  m.role = ChatRole::user;
  m.parts.push_back(ChatPart::from_text(prompt));
  r.messages.push_back(m);
  return r;
}

// One call plus one clarifying reprompt; `parse` returns nullopt on garbage.
template <typename T>
T ask_with_reprompt(ReasonerBackend& backend, const std::string& prompt,
                    const std::function<std::optional<T>(const std::string&)>&
                        parse,
                    const std::string& clarification) {
  ChatRequest request = text_request(prompt);
  ChatResult first = backend.chat_complete(request);
  if (auto v = parse(first.text)) return *v;
  ChatMessage echo;
  echo.role = ChatRole::assistant;
  echo.parts.push_back(ChatPart::from_text(first.text));
  request.messages.push_back(echo);
  ChatMessage again;
  again.role = ChatRole::user;
  again.parts.push_back(ChatPart::from_text(clarification));
  request.messages.push_back(again);
  ChatResult second = backend.chat_complete(request);
  if (auto v = parse(second.text)) return *v;
  throw ProtocolError("unusable model answer after reprompt: \"" +
                      trim(second.text) + "\"");
}

std::string lower_word(const std::string& raw) {
  std::string w = trim(raw);
  while (!w.empty() && (w.back() == '.' || w.back() == '!')) w.pop_back();
  std::transform(w.begin(), w.end(), w.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return w;
}

}  // namespace

InstructionClass classify_instruction(const Instruction& instruction,
                                      ReasonerBackend& annotator) {
  validate(instruction);
  auto parse = [](const std::string& raw) -> std::optional<InstructionClass> {
    std::string w = lower_word(raw);
    if (w == "simple") return InstructionClass::simple;
    if (w == "complex") return InstructionClass::complex;
    return std::nullopt;
  };
  return ask_with_reprompt<InstructionClass>(
      annotator, kClassifyPrompt + instruction.text, parse,
      "That was not one of the two allowed answers. Answer with exactly one "
      "word: simple or complex.");
}

ThinkingPair annotate_pair(const Instruction& instruction,
                           InstructionClass label,
                           ReasonerBackend& annotator) {
  validate(instruction);
  auto parse = [](const std::string& raw) -> std::optional<std::string> {
    std::string t = trim(raw);
    if (t.empty()) return std::nullopt;
    return t;
  };
  ThinkingPair pair;
  if (label == InstructionClass::complex) {
    std::string concrete = ask_with_reprompt<std::string>(
        annotator, kDecomposePrompt + instruction.text, parse,
        "Answer with the concrete instruction only.");
    pair.abstract_instruction = {instruction.text, InstructionKind::abstract};
    pair.concrete_instruction = {concrete, InstructionKind::concrete};
    pair.provenance = PairProvenance::simplified_from_complex;
  } else {
    std::string abstracted = ask_with_reprompt<std::string>(
        annotator, kAbstractPrompt + instruction.text, parse,
        "Answer with the abstract phrasing only.");
    pair.abstract_instruction = {abstracted, InstructionKind::abstract};
    pair.concrete_instruction = {instruction.text, InstructionKind::concrete};
    pair.provenance = PairProvenance::abstracted_from_simple;
  }
  return pair;
}

ThinkingPair passthrough_pair(const Instruction& instruction) {
  validate(instruction);
  ThinkingPair pair;
  pair.abstract_instruction = {instruction.text, InstructionKind::passthrough};
  pair.concrete_instruction = {instruction.text, InstructionKind::passthrough};
  pair.provenance = PairProvenance::passthrough;
  return pair;
}

ReviewState review_pair(const ThinkingPair& pair, ReasonerBackend& reviewer) {
  // Cheap local screening first; obviously broken pairs never reach a model.
  if (trim(pair.abstract_instruction.text).empty() ||
      trim(pair.concrete_instruction.text).empty())
    return ReviewState::rejected;
  auto parse = [](const std::string& raw) -> std::optional<ReviewState> {
    std::string w = lower_word(raw);
    if (w == "accept") return ReviewState::accepted;
    if (w == "reject") return ReviewState::rejected;
    return std::nullopt;
  };
  std::string prompt = std::string(kReviewPromptHead) +
                       "Abstract: " + pair.abstract_instruction.text + "\n" +
                       "Concrete: " + pair.concrete_instruction.text + "\n" +
                       "Request: " + pair.abstract_instruction.text;
  return ask_with_reprompt<ReviewState>(
      reviewer, prompt, parse,
      "Answer with exactly one word: accept or reject.");
}

// --- composition -----------------------------------------------------------

namespace {

// First n positions of a seeded shuffle of [0, pool), back in input order.
std::vector<size_t> sample_indices(size_t pool, size_t n, std::uint64_t seed) {
  std::vector<size_t> idx(pool);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

const char* kBucketNames[3] = {"simplified", "abstracted", "passthrough"};

}  // namespace

ThinkingComposition compose_thinking_dataset(
    const std::vector<ThinkingPair>& accepted, const CompositionTarget& target,
    std::uint64_t seed) {
  validate(target);
  std::vector<const ThinkingPair*> buckets[3];
  for (const auto& p : accepted) {
    if (p.review != ReviewState::accepted) continue;
    validate(p);
    buckets[static_cast<int>(p.provenance)].push_back(&p);
  }
  std::vector<int> counts = largest_remainder(
      target.total, {target.fraction_simplified, target.fraction_abstracted,
                     target.fraction_passthrough});
  std::string shortfall;
  for (int b = 0; b < 3; ++b) {
    if (buckets[b].size() < static_cast<size_t>(counts[b])) {
      if (!shortfall.empty()) shortfall += "; ";
      shortfall += std::string(kBucketNames[b]) + " needs " +
                   std::to_string(counts[b]) + ", has " +
                   std::to_string(buckets[b].size());
    }
  }
  if (!shortfall.empty())
    throw ShortfallError("composition shortfall: " + shortfall);

  ThinkingComposition out;
  for (int b = 0; b < 3; ++b) {
    out.counts[b] = counts[b];
    auto picked = sample_indices(buckets[b].size(),
                                 static_cast<size_t>(counts[b]),
                                 mix_hash(seed, "bucket", kBucketNames[b]));
    for (size_t i : picked) out.pairs.push_back(*buckets[b][i]);
  }
  std::mt19937_64 rng(mix_hash(seed, "shuffle"));
  std::shuffle(out.pairs.begin(), out.pairs.end(), rng);
  return out;
}

// --- reflection triples ----------------------------------------------------

namespace {

// Runs fn(i) for i in [0, n) on up to `concurrency` workers. The first
// exception (by item index) is rethrown so failures are deterministic.
void for_each_indexed(size_t n, int concurrency,
                      const std::function<void(size_t)>& fn) {
  int workers = std::max(1, std::min<int>(concurrency, static_cast<int>(n)));
  if (workers == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

TripleBuildResult build_reflection_triples(
    const std::vector<SourcePair>& sources,
    const std::vector<std::shared_ptr<GeneratorBackend>>& editors,
    Reasoner& reflector, const CompositionTarget& target, std::uint64_t seed,
    int concurrency) {
  validate(target);
  if (editors.empty())
    throw ValidationError("editors", "need at least one editor backend");

  std::vector<std::optional<ReflectionTriple>> made(sources.size());
  std::atomic<int> skipped{0};
  for_each_indexed(sources.size(), concurrency, [&](size_t i) {
    const SourcePair& src = sources[i];
    const auto& editor = editors[i % editors.size()];
    try {
      EditRequest first;
      first.reference = src.image;
      first.instruction = src.instruction;
      first.seed = static_cast<std::int64_t>(mix_hash(seed, "edit", src.id));
      ImageRef generated = editor->edit_image(first);
      ReflectOutput verdict = reflector.reflect(
          ReflectionVariant::multi_round, src.image, generated,
          src.instruction);
      ReflectionTriple t;
      t.source_id = src.id;
      t.input = src.image;
      t.edit_instruction = src.instruction;
      t.generated = generated;
      switch (verdict.conclusion.tag) {
        case ConclusionTag::Success:
          t.outcome = TripleOutcome::success;
          t.corrected = generated;
          break;
        case ConclusionTag::Failed:
          t.outcome = TripleOutcome::failed;
          t.corrected = generated;
          break;
        case ConclusionTag::Reflect: {
          t.outcome = TripleOutcome::reflection;
          t.reflection_instruction = verdict.conclusion.refinement_instruction;
          EditRequest fix;
          fix.reference = generated;
          fix.instruction = *t.reflection_instruction;
          fix.seed =
              static_cast<std::int64_t>(mix_hash(seed, "correct", src.id));
          t.corrected = editor->edit_image(fix);
          break;
        }
      }
      validate(t);
      made[i] = std::move(t);
    } catch (const Error&) {
      skipped.fetch_add(1);
    }
  });

  TripleBuildResult result;
  result.skipped = skipped.load();
  std::vector<size_t> by_class[3];
  for (size_t i = 0; i < made.size(); ++i) {
    if (!made[i]) continue;
    by_class[static_cast<int>(made[i]->outcome)].push_back(i);
  }
  result.produced_success = static_cast<int>(by_class[0].size());
  result.produced_reflection = static_cast<int>(by_class[1].size());
  result.produced_failed = static_cast<int>(by_class[2].size());

  const double weights[3] = {target.weight_success, target.weight_reflection,
                             target.weight_failed};
  // Largest whole multiple of the ratio every class can supply.
  double k = 1e18;
  for (int c = 0; c < 3; ++c)
    k = std::min(k, std::floor(static_cast<double>(by_class[c].size()) /
                               weights[c]));
  std::vector<size_t> chosen;
  if (k >= 1.0) {
    result.ratio_achieved = true;
    for (int c = 0; c < 3; ++c) {
      size_t take = static_cast<size_t>(std::llround(k * weights[c]));
      auto picked = sample_indices(by_class[c].size(), take,
                                   mix_hash(seed, "sample",
                                            std::to_string(c)));
      for (size_t p : picked) chosen.push_back(by_class[c][p]);
    }
  } else {
    // Some class cannot fill even one ratio unit: keep everything rather
    // than discard the run, and report that the target mix was not reached.
    result.ratio_achieved = false;
    for (int c = 0; c < 3; ++c)
      chosen.insert(chosen.end(), by_class[c].begin(), by_class[c].end());
  }
  std::sort(chosen.begin(), chosen.end());
  for (size_t i : chosen) result.retained.push_back(std::move(*made[i]));
  return result;
}

int tag_viescores(std::vector<ReflectionTriple>& triples, Reasoner& judge) {
  std::vector<ReflectionTriple> kept;
  int rejected = 0;
  for (auto& t : triples) {
    try {
      t.vie = judge.score_vie(t.input, t.corrected, t.edit_instruction);
      kept.push_back(std::move(t));
    } catch (const ProtocolError&) {
      ++rejected;
    } catch (const ValidationError&) {
      ++rejected;  // out-of-range judge axes are a rejection, not a default
    }
  }
  triples.swap(kept);
  return rejected;
}

// --- file pipelines --------------------------------------------------------

std::vector<PoolRow> read_pool(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<PoolRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path + " line " + std::to_string(lineno) + ": " +
                        e.what());
    }
    PoolRow row;
    row.id = j.value("id", "row-" + std::to_string(lineno));
    row.image = j.value("image", "");
    if (!j.contains("instruction") || !j["instruction"].is_string())
      throw ConfigError(path + " line " + std::to_string(lineno) +
                        ": missing \"instruction\"");
    row.instruction = j["instruction"].get<std::string>();
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

nlohmann::ordered_json instruction_json(const Instruction& i) {
  return {{"text", i.text}, {"kind", to_string(i.kind)}};
}

nlohmann::ordered_json image_json(const ImageRef& r) {
  return {{"uri", r.uri},
          {"media_type", to_string(r.media_type)},
          {"sha256", r.sha256}};
}

std::string join_path(const std::string& dir, const char* name) {
  return (std::filesystem::path(dir) / name).string();
}

}  // namespace

std::string ForgeReport::to_json() const {
  nlohmann::ordered_json j;
  j["pool_size"] = pool_size;
  j["rejected"] = rejected;
  for (int b = 0; b < 3; ++b) {
    j["counts"][kBucketNames[b]] = counts[b];
    j["fractions"][kBucketNames[b]] = fractions[b];
  }
  return j.dump(2);
}

ForgeReport forge_thinking(const std::vector<PoolRow>& pool,
                           const BackendSet& backends,
                           const CompositionTarget& target, std::uint64_t seed,
                           const std::string& out_dir, int concurrency) {
  validate(target);
  struct Item {
    std::string id;
    std::vector<ThinkingPair> pairs;  // annotated, plus passthrough if simple
    std::string reject_reason;
  };
  std::vector<Item> items(pool.size());
  for_each_indexed(pool.size(), concurrency, [&](size_t i) {
    Item& item = items[i];
    item.id = pool[i].id;
    Instruction instruction{pool[i].instruction, InstructionKind::abstract};
    try {
      InstructionClass label =
          classify_instruction(instruction, *backends.reasoner);
      item.pairs.push_back(
          annotate_pair(instruction, label, *backends.reasoner));
      // Clear commands double as unedited passthrough training pairs.
      if (label == InstructionClass::simple)
        item.pairs.push_back(passthrough_pair(instruction));
    } catch (const Error& e) {
      item.pairs.clear();
      item.reject_reason = e.what();
    }
  });

  // Resumable screening queue: verdicts a human already recorded win over a
  // fresh model review.
  std::map<std::string, ReviewState> prior;
  std::string queue_path = join_path(out_dir, "review_queue.jsonl");
  if (std::filesystem::exists(queue_path)) {
    std::istringstream in(read_file(queue_path));
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line);
      std::string state = j.value("review", "pending");
      if (state == "accepted")
        prior[j.value("key", "")] = ReviewState::accepted;
      else if (state == "rejected")
        prior[j.value("key", "")] = ReviewState::rejected;
    }
  }

  struct Entry {
    std::string key;
    ThinkingPair pair;
  };
  std::vector<Entry> entries;
  ForgeReport report;
  report.pool_size = static_cast<int>(pool.size());
  nlohmann::ordered_json rejects = nlohmann::json::array();
  for (size_t i = 0; i < items.size(); ++i) {
    if (!items[i].reject_reason.empty()) {
      ++report.rejected;
      rejects.push_back({{"id", items[i].id},
                         {"instruction", pool[i].instruction},
                         {"reason", items[i].reject_reason}});
      continue;
    }
    for (size_t p = 0; p < items[i].pairs.size(); ++p)
      entries.push_back(
          {items[i].id + (p == 0 ? "" : "#pt"), items[i].pairs[p]});
  }

  for_each_indexed(entries.size(), concurrency, [&](size_t i) {
    Entry& e = entries[i];
    auto it = prior.find(e.key);
    if (it != prior.end()) {
      e.pair.review = it->second;
    } else if (e.pair.provenance == PairProvenance::passthrough) {
      // Identity pairs need no model verdict.
      e.pair.review = ReviewState::accepted;
    } else {
      try {
        e.pair.review = review_pair(e.pair, *backends.reasoner);
      } catch (const ProtocolError&) {
        e.pair.review = ReviewState::rejected;
      }
    }
  });

  std::string queue;
  std::vector<ThinkingPair> accepted;
  for (const Entry& e : entries) {
    nlohmann::ordered_json j;
    j["key"] = e.key;
    j["abstract"] = instruction_json(e.pair.abstract_instruction);
    j["concrete"] = instruction_json(e.pair.concrete_instruction);
    j["provenance"] = to_string(e.pair.provenance);
    j["review"] = to_string(e.pair.review);
    queue += j.dump() + "\n";
    if (e.pair.review == ReviewState::accepted) accepted.push_back(e.pair);
    if (e.pair.review == ReviewState::rejected) {
      ++report.rejected;
      rejects.push_back({{"id", e.key},
                         {"instruction", e.pair.concrete_instruction.text},
                         {"reason", "review rejected"}});
    }
  }
  write_file(queue_path, queue);

  ThinkingComposition composed =
      compose_thinking_dataset(accepted, target, seed);
  std::string out;
  for (const ThinkingPair& p : composed.pairs) {
    nlohmann::ordered_json j;
    j["abstract"] = instruction_json(p.abstract_instruction);
    j["concrete"] = instruction_json(p.concrete_instruction);
    j["provenance"] = to_string(p.provenance);
    out += j.dump() + "\n";
  }
  write_file(join_path(out_dir, "thinking_pairs.jsonl"), out);
  std::string reject_lines;
  for (const auto& j : rejects) reject_lines += j.dump() + "\n";
  write_file(join_path(out_dir, "rejects.jsonl"), reject_lines);

  report.counts = composed.counts;
  for (int b = 0; b < 3; ++b)
    report.fractions[b] =
        static_cast<double>(composed.counts[b]) / target.total;
  write_file(join_path(out_dir, "composition_report.json"),
             report.to_json() + "\n");
  return report;
}

std::string TripleForgeReport::to_json() const {
  static const char* kClassNames[3] = {"success", "reflection", "failed"};
  nlohmann::ordered_json j;
  j["pool_size"] = pool_size;
  j["retained"] = retained;
  j["rejected"] = rejected;
  j["skipped"] = skipped;
  for (int c = 0; c < 3; ++c) j["produced"][kClassNames[c]] = produced[c];
  for (int c = 0; c < 3; ++c) j["counts"][kClassNames[c]] = counts[c];
  j["ratio_achieved"] = ratio_achieved;
  return j.dump(2);
}

TripleForgeReport forge_triples(
    const std::vector<PoolRow>& pool,
    const std::vector<std::shared_ptr<GeneratorBackend>>& editors,
    const BackendSet& backends, const TemplateSet& templates,
    const CompositionTarget& target, std::uint64_t seed,
    const std::string& out_dir, int concurrency) {
  std::vector<SourcePair> sources;
  for (const PoolRow& row : pool) {
    if (row.image.empty())
      throw ConfigError("pool row \"" + row.id +
                        "\" has no image; triples need one");
    sources.push_back({row.id, resolve_image(row.image),
                       Instruction{row.instruction, InstructionKind::concrete}});
  }
  Reasoner reflector(backends.reasoner, templates);
  TripleBuildResult built = build_reflection_triples(
      sources, editors, reflector, target, seed, concurrency);
  int rejected = tag_viescores(built.retained, reflector);

  std::string out;
  TripleForgeReport report;
  for (const ReflectionTriple& t : built.retained) {
    nlohmann::ordered_json j;
    j["source_id"] = t.source_id;
    j["input"] = image_json(t.input);
    j["edit_instruction"] = instruction_json(t.edit_instruction);
    j["generated"] = image_json(t.generated);
    j["reflection_instruction"] =
        t.reflection_instruction ? instruction_json(*t.reflection_instruction)
                                 : nlohmann::ordered_json(nullptr);
    j["corrected"] = image_json(t.corrected);
    j["vie"] = {{"semantic_consistency", fmt4(t.vie.semantic_consistency)},
                {"perceptual_quality", fmt4(t.vie.perceptual_quality)},
                {"overall", fmt4(t.vie.overall)}};
    j["outcome"] = to_string(t.outcome);
    out += j.dump() + "\n";
    ++report.counts[static_cast<int>(t.outcome)];
  }
  write_file(join_path(out_dir, "reflection_triples.jsonl"), out);

  report.pool_size = static_cast<int>(pool.size());
  report.retained = static_cast<int>(built.retained.size());
  report.rejected = rejected;
  report.skipped = built.skipped;
  report.produced = {built.produced_success, built.produced_reflection,
                     built.produced_failed};
  report.ratio_achieved = built.ratio_achieved;
  write_file(join_path(out_dir, "composition_report.json"),
             report.to_json() + "\n");
  return report;
}

}  // namespace reasonloop
