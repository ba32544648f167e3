#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace reasonloop {

// Trace schema version; bumped on any incompatible change to the JSONL layout.
inline constexpr const char* kTraceVersion = "reasonloop/1";

enum class MediaType { png, jpeg };
std::string to_string(MediaType m);
MediaType media_type_from_string(const std::string& s);

// Images travel by reference everywhere: a uri plus the digest of the bytes
// the uri pointed at when the reference was recorded.
struct ImageRef {
  std::string uri;
  MediaType media_type = MediaType::png;
  std::string sha256;

  bool operator==(const ImageRef&) const = default;
};

// Builds an ImageRef for on-disk bytes: digests them and sniffs the media
// type from the magic bytes. Throws ValidationError on unknown formats.
ImageRef image_ref_from_bytes(const std::string& uri, const std::string& bytes);

enum class InstructionKind { abstract, concrete, passthrough };
std::string to_string(InstructionKind k);
InstructionKind instruction_kind_from_string(const std::string& s);

struct Instruction {
  std::string text;
  InstructionKind kind = InstructionKind::abstract;

  bool operator==(const Instruction&) const = default;
};

enum class ConclusionTag { Success, Reflect, Failed };
// Serialized with the '#' preserved: "#Success", "#Reflection", "#Failed".
std::string to_string(ConclusionTag t);
ConclusionTag conclusion_tag_from_string(const std::string& s);

struct ReflectionConclusion {
  ConclusionTag tag = ConclusionTag::Success;
  std::string reasoning;
  std::optional<Instruction> refinement_instruction;

  bool operator==(const ReflectionConclusion&) const = default;
};

struct VIEScore {
  double semantic_consistency = 0.0;
  double perceptual_quality = 0.0;
  double overall = 0.0;

  // overall is always recomputed from the two axes, never taken on trust.
  static VIEScore from_axes(double sc, double pq);

  bool operator==(const VIEScore&) const = default;
};

struct Assessment {
  double consistency_score = 0.0;
  std::vector<std::string> conflicts;
  std::vector<std::string> omissions;
  std::vector<std::string> hallucinations;
  std::string rationale;

  bool operator==(const Assessment&) const = default;
};

struct RoundRecord {
  int index = 0;
  Instruction instruction_used;
  ImageRef generated;
  std::optional<std::string> target_description;
  std::optional<Assessment> assessment;
  std::optional<ReflectionConclusion> conclusion;
  std::optional<VIEScore> vie;
  std::int64_t latency_ms = 0;

  bool operator==(const RoundRecord&) const = default;
};

enum class LoopMode { base, thinking, thinking_reflection, reroll };
std::string to_string(LoopMode m);
LoopMode loop_mode_from_string(const std::string& s);

enum class ReflectionVariant { dual_image, single_image, multi_round };
std::string to_string(ReflectionVariant v);
ReflectionVariant reflection_variant_from_string(const std::string& s);

struct LoopPolicy {
  LoopMode mode = LoopMode::thinking_reflection;
  int max_reflection_rounds = 2;
  int reroll_attempts = 0;
  ReflectionVariant reflection_variant = ReflectionVariant::multi_round;
  bool stop_on_success_tag = true;

  bool operator==(const LoopPolicy&) const = default;
};

enum class SessionStatus { Running, Succeeded, Stopped, Failed };
std::string to_string(SessionStatus s);
SessionStatus session_status_from_string(const std::string& s);

struct EditSession {
  std::string session_id;  // UUIDv4
  ImageRef reference;
  Instruction original_instruction;
  std::optional<Instruction> thought;
  std::vector<RoundRecord> rounds;
  SessionStatus status = SessionStatus::Running;
  LoopPolicy policy;
  std::int64_t seed = 0;

  bool operator==(const EditSession&) const = default;
};

// Invariant checks. Each throws ValidationError with the field path of the
// first violation; `path` prefixes the reported location.
void validate(const ImageRef& r, const std::string& path = "image_ref");
void validate(const Instruction& i, const std::string& path = "instruction");
void validate(const ReflectionConclusion& c,
              const std::string& path = "conclusion");
void validate(const VIEScore& v, const std::string& path = "vie");
void validate(const Assessment& a, const std::string& path = "assessment");
void validate(const LoopPolicy& p, const std::string& path = "policy");
void validate(const EditSession& s, const std::string& path = "session");

}  // namespace reasonloop
