#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "reasonloop/backends.hpp"
#include "reasonloop/core_types.hpp"
#include "reasonloop/errors.hpp"
#include "reasonloop/reasoner.hpp"

namespace reasonloop {

// Desk-scale builders for the two reasoning datasets: thinking pairs
// (classify -> two-way annotate -> review -> mix) and reflection triples
// (generate intermediates -> reflect -> screen -> ratio-balance -> tag).

enum class PairProvenance {
  simplified_from_complex,
  abstracted_from_simple,
  passthrough
};
std::string to_string(PairProvenance p);

enum class ReviewState { accepted, rejected, pending };
std::string to_string(ReviewState r);

struct ThinkingPair {
  Instruction abstract_instruction;
  Instruction concrete_instruction;
  PairProvenance provenance = PairProvenance::passthrough;
  ReviewState review = ReviewState::pending;

  bool operator==(const ThinkingPair&) const = default;
};

void validate(const ThinkingPair& p, const std::string& path = "pair");

enum class InstructionClass { simple, complex };

enum class TripleOutcome { success, reflection, failed };
std::string to_string(TripleOutcome o);

struct ReflectionTriple {
  std::string source_id;
  ImageRef input;
  Instruction edit_instruction;
  ImageRef generated;
  std::optional<Instruction> reflection_instruction;
  ImageRef corrected;
  VIEScore vie;
  TripleOutcome outcome = TripleOutcome::success;
};

void validate(const ReflectionTriple& t, const std::string& path = "triple");

// Target mix for both datasets. Thinking fractions default to the
// 62k : 88k : 50k proportions of a 200k set; triples default to 3:1:1.
struct CompositionTarget {
  int total = 400;
  double fraction_simplified = 0.31;
  double fraction_abstracted = 0.44;
  double fraction_passthrough = 0.25;
  double weight_success = 3.0;
  double weight_reflection = 1.0;
  double weight_failed = 1.0;
};

void validate(const CompositionTarget& t, const std::string& path = "target");

// A bucket could not supply its allocation.
class ShortfallError : public Error {
 public:
  using Error::Error;
};

// Deterministic proportional allocation: floor the quotas, then hand the
// remaining units to the largest fractional remainders (ties to the earlier
// bucket). Sums exactly to total.
std::vector<int> largest_remainder(int total,
                                   const std::vector<double>& fractions);

// --- thinking pairs --------------------------------------------------------

// One-word constrained classification. Reprompts once on garbage, then
// throws ProtocolError (callers route the item to the rejects file).
InstructionClass classify_instruction(const Instruction& instruction,
                                      ReasonerBackend& annotator);

// Two-way annotation: complex instructions get a decomposed concrete side,
// simple ones get an invented abstract side.
ThinkingPair annotate_pair(const Instruction& instruction,
                           InstructionClass label,
                           ReasonerBackend& annotator);

// Passthrough injection: abstract = concrete, no annotator involved.
ThinkingPair passthrough_pair(const Instruction& instruction);

// Local validation first (empty texts reject without a model call), then a
// binary model verdict.
ReviewState review_pair(const ThinkingPair& pair, ReasonerBackend& reviewer);

struct ThinkingComposition {
  std::vector<ThinkingPair> pairs;       // seeded shuffle of the selection
  std::array<int, 3> counts{};           // simplified, abstracted, passthrough
};

// Draws the target allocation from the accepted pool (seeded sampling).
// Throws ShortfallError naming every deficient bucket.
ThinkingComposition compose_thinking_dataset(
    const std::vector<ThinkingPair>& accepted, const CompositionTarget& target,
    std::uint64_t seed);

// --- reflection triples ----------------------------------------------------

struct SourcePair {
  std::string id;
  ImageRef image;
  Instruction instruction;
};

struct TripleBuildResult {
  std::vector<ReflectionTriple> retained;
  int produced_success = 0;
  int produced_reflection = 0;
  int produced_failed = 0;
  int skipped = 0;           // editor failures
  bool ratio_achieved = false;  // false when a class was empty
};

// Round-robin assigns sources to editors, labels each intermediate with the
// reflector's multi-round pipeline, runs one corrective edit for reflection
// items, then down-samples (seeded) to the closest achievable
// success:reflection:failed weights. VIEScores are left for tag_viescores.
TripleBuildResult build_reflection_triples(
    const std::vector<SourcePair>& sources,
    const std::vector<std::shared_ptr<GeneratorBackend>>& editors,
    Reasoner& reflector, const CompositionTarget& target, std::uint64_t seed,
    int concurrency = 1);

// Scores every triple's corrected image; judge protocol errors drop the
// triple. Returns the number rejected.
int tag_viescores(std::vector<ReflectionTriple>& triples, Reasoner& judge);

// --- file pipelines (CLI surface) ------------------------------------------

struct PoolRow {
  std::string id;
  std::string image;  // empty for thinking-pair pools
  std::string instruction;
};

std::vector<PoolRow> read_pool(const std::string& path);

struct ForgeReport {
  int pool_size = 0;
  int rejected = 0;
  std::array<int, 3> counts{};
  std::array<double, 3> fractions{};
  std::string to_json() const;
};

// Full thinking-pair pipeline over a pool file; writes thinking_pairs.jsonl,
// rejects.jsonl, review_queue.jsonl and composition_report.json under
// out_dir. An existing review_queue.jsonl is reloaded first: entries a human
// marked accepted/rejected keep their verdict and skip the model reviewer,
// so the screening stage is resumable between runs.
ForgeReport forge_thinking(const std::vector<PoolRow>& pool,
                           const BackendSet& backends,
                           const CompositionTarget& target, std::uint64_t seed,
                           const std::string& out_dir, int concurrency = 1);

struct TripleForgeReport {
  int pool_size = 0;
  int retained = 0;
  int rejected = 0;
  int skipped = 0;
  std::array<int, 3> produced{};  // success, reflection, failed
  std::array<int, 3> counts{};    // retained per class
  bool ratio_achieved = false;
  std::string to_json() const;
};

// Full reflection-triple pipeline; writes reflection_triples.jsonl and
// composition_report.json under out_dir.
TripleForgeReport forge_triples(
    const std::vector<PoolRow>& pool,
    const std::vector<std::shared_ptr<GeneratorBackend>>& editors,
    const BackendSet& backends, const TemplateSet& templates,
    const CompositionTarget& target, std::uint64_t seed,
    const std::string& out_dir, int concurrency = 1);

}  // namespace reasonloop
