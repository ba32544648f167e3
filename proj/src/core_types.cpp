#include "reasonloop/core_types.hpp"

#include <cmath>

#include "reasonloop/errors.hpp"
#include "reasonloop/util.hpp"

namespace reasonloop {

std::string to_string(MediaType m) {
  return m == MediaType::png ? "png" : "jpeg";
}

MediaType media_type_from_string(const std::string& s) {
  if (s == "png") return MediaType::png;
  if (s == "jpeg") return MediaType::jpeg;
  throw ValidationError("media_type", "unknown media type \"" + s + "\"");
}

ImageRef image_ref_from_bytes(const std::string& uri,
                              const std::string& bytes) {
  auto media = sniff_media_type(bytes);
  if (!media)
    throw ValidationError("image_ref.media_type",
                          "bytes are neither PNG nor JPEG: " + uri);
  ImageRef r;
  r.uri = uri;
  r.media_type = media_type_from_string(*media);
  r.sha256 = sha256_hex(bytes);
  return r;
}

std::string to_string(InstructionKind k) {
  switch (k) {
    case InstructionKind::abstract: return "abstract";
    case InstructionKind::concrete: return "concrete";
    case InstructionKind::passthrough: return "passthrough";
  }
  return "abstract";
}

InstructionKind instruction_kind_from_string(const std::string& s) {
  if (s == "abstract") return InstructionKind::abstract;
  if (s == "concrete") return InstructionKind::concrete;
  if (s == "passthrough") return InstructionKind::passthrough;
  throw ValidationError("instruction.kind", "unknown kind \"" + s + "\"");
}

std::string to_string(ConclusionTag t) {
  switch (t) {
    case ConclusionTag::Success: return "#Success";
    case ConclusionTag::Reflect: return "#Reflection";
    case ConclusionTag::Failed: return "#Failed";
  }
  return "#Success";
}

ConclusionTag conclusion_tag_from_string(const std::string& s) {
  if (s == "#Success") return ConclusionTag::Success;
  if (s == "#Reflection") return ConclusionTag::Reflect;
  if (s == "#Failed") return ConclusionTag::Failed;
  throw ValidationError("conclusion.tag", "unknown tag \"" + s + "\"");
}

VIEScore VIEScore::from_axes(double sc, double pq) {
  VIEScore v;
  v.semantic_consistency = sc;
  v.perceptual_quality = pq;
  v.overall = std::sqrt(sc * pq);
  validate(v);
  return v;
}

std::string to_string(LoopMode m) {
  switch (m) {
    case LoopMode::base: return "base";
    case LoopMode::thinking: return "thinking";
    case LoopMode::thinking_reflection: return "thinking_reflection";
    case LoopMode::reroll: return "reroll";
  }
  return "base";
}

LoopMode loop_mode_from_string(const std::string& s) {
  if (s == "base") return LoopMode::base;
  if (s == "thinking") return LoopMode::thinking;
  if (s == "thinking_reflection") return LoopMode::thinking_reflection;
  if (s == "reroll") return LoopMode::reroll;
  throw ValidationError("policy.mode", "unknown mode \"" + s + "\"");
}

std::string to_string(ReflectionVariant v) {
  switch (v) {
    case ReflectionVariant::dual_image: return "dual_image";
    case ReflectionVariant::single_image: return "single_image";
    case ReflectionVariant::multi_round: return "multi_round";
  }
  return "multi_round";
}

ReflectionVariant reflection_variant_from_string(const std::string& s) {
  if (s == "dual_image") return ReflectionVariant::dual_image;
  if (s == "single_image") return ReflectionVariant::single_image;
  if (s == "multi_round") return ReflectionVariant::multi_round;
  throw ValidationError("policy.reflection_variant",
                        "unknown variant \"" + s + "\"");
}

std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::Running: return "Running";
    case SessionStatus::Succeeded: return "Succeeded";
    case SessionStatus::Stopped: return "Stopped";
    case SessionStatus::Failed: return "Failed";
  }
  return "Running";
}

SessionStatus session_status_from_string(const std::string& s) {
  if (s == "Running") return SessionStatus::Running;
  if (s == "Succeeded") return SessionStatus::Succeeded;
  if (s == "Stopped") return SessionStatus::Stopped;
  if (s == "Failed") return SessionStatus::Failed;
  throw ValidationError("session.status", "unknown status \"" + s + "\"");
}

void validate(const ImageRef& r, const std::string& path) {
  if (r.uri.empty()) throw ValidationError(path + ".uri", "must be non-empty");
  if (r.sha256.size() != 64 ||
      r.sha256.find_first_not_of("0123456789abcdef") != std::string::npos)
    throw ValidationError(path + ".sha256",
                          "must be a 64-char lowercase hex digest");
}

void validate(const Instruction& i, const std::string& path) {
  if (trim(i.text).empty())
    throw ValidationError(path + ".text", "must be non-empty after trimming");
}

void validate(const ReflectionConclusion& c, const std::string& path) {
  if (trim(c.reasoning).empty())
    throw ValidationError(path + ".reasoning", "must be non-empty");
  bool want = c.tag == ConclusionTag::Reflect;
  if (want && !c.refinement_instruction)
    throw ValidationError(path + ".refinement_instruction",
                          "required when tag is #Reflection");
  if (!want && c.refinement_instruction)
    throw ValidationError(path + ".refinement_instruction",
                          "only allowed when tag is #Reflection");
  if (c.refinement_instruction)
    validate(*c.refinement_instruction, path + ".refinement_instruction");
}

void validate(const VIEScore& v, const std::string& path) {
  auto in_range = [](double x) {
    return std::isfinite(x) && x >= 0.0 && x <= 10.0;
  };
  if (!in_range(v.semantic_consistency))
    throw ValidationError(path + ".semantic_consistency", "must be in [0,10]");
  if (!in_range(v.perceptual_quality))
    throw ValidationError(path + ".perceptual_quality", "must be in [0,10]");
  if (!in_range(v.overall))
    throw ValidationError(path + ".overall", "must be in [0,10]");
  double expect = std::sqrt(v.semantic_consistency * v.perceptual_quality);
  if (std::fabs(v.overall - expect) > 1e-9)
    throw ValidationError(path + ".overall",
                          "must equal sqrt(semantic_consistency * "
                          "perceptual_quality) within 1e-9");
}

void validate(const Assessment& a, const std::string& path) {
  if (!std::isfinite(a.consistency_score) || a.consistency_score < 0.0 ||
      a.consistency_score > 10.0)
    throw ValidationError(path + ".consistency_score", "must be in [0,10]");
}

void validate(const LoopPolicy& p, const std::string& path) {
  if (p.max_reflection_rounds < 0)
    throw ValidationError(path + ".max_reflection_rounds", "must be >= 0");
  if (p.reroll_attempts < 0)
    throw ValidationError(path + ".reroll_attempts", "must be >= 0");
  if (p.mode == LoopMode::reroll && p.max_reflection_rounds != 0)
    throw ValidationError(path + ".max_reflection_rounds",
                          "must be 0 in reroll mode");
}

void validate(const EditSession& s, const std::string& path) {
  if (s.session_id.empty())
    throw ValidationError(path + ".session_id", "must be non-empty");
  validate(s.reference, path + ".reference");
  validate(s.original_instruction, path + ".original_instruction");
  if (s.thought) validate(*s.thought, path + ".thought");
  validate(s.policy, path + ".policy");
  // Round budget: reroll sessions hold one round per attempt, every other
  // mode at most one round per reflection plus the initial edit.
  size_t cap = s.policy.mode == LoopMode::reroll
                   ? static_cast<size_t>(s.policy.reroll_attempts) + 1
                   : static_cast<size_t>(s.policy.max_reflection_rounds) + 1;
  if (s.rounds.size() > cap)
    throw ValidationError(path + ".rounds",
                          "length exceeds the policy round budget");
  for (size_t i = 0; i < s.rounds.size(); ++i) {
    const auto& r = s.rounds[i];
    std::string rp = path + ".rounds[" + std::to_string(i) + "]";
    if (r.index != static_cast<int>(i))
      throw ValidationError(rp + ".index",
                            "round indices must be contiguous from 0");
    validate(r.instruction_used, rp + ".instruction_used");
    validate(r.generated, rp + ".generated");
    if (r.assessment) validate(*r.assessment, rp + ".assessment");
    if (r.conclusion) validate(*r.conclusion, rp + ".conclusion");
    if (r.vie) validate(*r.vie, rp + ".vie");
  }
  if (s.status == SessionStatus::Succeeded && s.rounds.empty())
    throw ValidationError(path + ".status",
                          "Succeeded requires at least one round");
}

}  // namespace reasonloop
