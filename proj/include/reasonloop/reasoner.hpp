#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "reasonloop/backends.hpp"
#include "reasonloop/core_types.hpp"

namespace reasonloop {

struct PromptTemplate {
  std::string name;
  std::vector<std::string> slots;
  std::string body;

  // Checks every {placeholder} in body appears in slots.
  void check() const;
  // Binds all slots; throws ProtocolError if a placeholder is left unbound
  // or a slot is missing from the bindings.
  std::string render(const std::map<std::string, std::string>& bindings) const;
};

// The seven prompt files shipped under templates/: think, describe, assess,
// conclude_multi, conclude_single, conclude_dual, score. All are
// slot-checked at load time.
class TemplateSet {
 public:
  static TemplateSet load_dir(const std::string& dir);
  const PromptTemplate& get(const std::string& name) const;

 private:
  std::map<std::string, PromptTemplate> templates_;
};

// Splits raw model text on the literal markers <#Success>, <#Reflection>,
// <#Failed> (case-sensitive, exactly one must occur). For #Reflection the
// text after the marker is the refinement instruction. Throws ProtocolError
// on zero or multiple markers, empty reasoning, or a #Reflection with no
// instruction text.
ReflectionConclusion parse_conclusion(const std::string& raw);

struct ReflectOutput {
  std::optional<std::string> target_description;
  std::optional<Assessment> assessment;
  ReflectionConclusion conclusion;
};

// Prompt/parse protocols for the thinking operation and the three
// reflection-pipeline variants. Stateless apart from the backend handle.
class Reasoner {
 public:
  Reasoner(std::shared_ptr<ReasonerBackend> backend, TemplateSet templates);

  // Rewrites an abstract request into concrete directives. Echoed input
  // comes back with kind = passthrough.
  Instruction think(const ImageRef& reference, const Instruction& instruction);

  // Target-image blueprint; the request carries only the reference image.
  std::string describe_target(const ImageRef& reference,
                              const Instruction& instruction);

  // Scores the result against the blueprint; only the result image attached.
  Assessment assess_result(const ImageRef& result,
                           const std::string& target_description);

  // Final conclusion with full context (both images).
  ReflectionConclusion conclude(const ImageRef& reference,
                                const ImageRef& result,
                                const Instruction& instruction,
                                const std::optional<Assessment>& assessment);

  // Two-axis judge score; overall recomputed locally, never trusted from the
  // model. Only the result image is attached.
  VIEScore score_vie(const ImageRef& reference, const ImageRef& result,
                     const Instruction& instruction);

  // The full reflection step under one of the three pipeline variants:
  //   multi_round  - describe -> assess -> conclude (3 calls)
  //   single_image - describe -> combined assess+conclude, no reference
  //                  image in the second call (2 calls)
  //   dual_image   - one call with both images, conclusion only
  ReflectOutput reflect(ReflectionVariant variant, const ImageRef& reference,
                        const ImageRef& result, const Instruction& instruction);

 private:
  ChatResult call(const std::string& prompt, const std::vector<ImageRef>& images);
  // One reprompt on parse failure, then ProtocolError.
  std::string call_for_json(const std::string& prompt,
                            const std::vector<ImageRef>& images,
                            std::string* raw_out = nullptr);

  std::shared_ptr<ReasonerBackend> backend_;
  TemplateSet templates_;
};

}  // namespace reasonloop
