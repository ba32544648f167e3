#include "reasonloop/reasoner.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <filesystem>
#include <functional>

#include "reasonloop/errors.hpp"
#include "reasonloop/util.hpp"

namespace reasonloop {

namespace {

using nlohmann::json;

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// {identifier} placeholders; literal JSON braces ({"key": ...}) don't match.
std::vector<std::string> find_placeholders(const std::string& body) {
  std::vector<std::string> out;
  for (size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '{') continue;
    size_t j = i + 1;
    while (j < body.size() && is_ident_char(body[j])) ++j;
    if (j > i + 1 && j < body.size() && body[j] == '}') {
      out.push_back(body.substr(i + 1, j - i - 1));
      i = j;
    }
  }
  return out;
}

// Extracts the first fenced code block, else assumes the whole text is JSON.
std::string fenced_block(const std::string& text) {
  auto start = text.find("```");
  if (start == std::string::npos) return text;
  start = text.find('\n', start);
  if (start == std::string::npos) return text;
  auto end = text.find("```", start);
  if (end == std::string::npos) return text;
  return text.substr(start + 1, end - start - 1);
}

json parse_fenced_json(const std::string& text) {
  json j = json::parse(fenced_block(text), nullptr, false);
  if (j.is_discarded()) throw ProtocolError("model output is not fenced JSON");
  return j;
}

double score_in_range(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number())
    throw ProtocolError(std::string(key) + " missing or not a number");
  double v = j[key].get<double>();
  if (!(v >= 0.0 && v <= 10.0))
    throw ProtocolError(std::string(key) + " out of range [0,10]: " +
                        std::to_string(v));
  return round4(v);
}

constexpr const char* kReprompt =
    "Your previous reply could not be parsed. Answer again following the "
    "required format exactly.";

}  // namespace

void PromptTemplate::check() const {
  for (const auto& p : find_placeholders(body)) {
    if (std::find(slots.begin(), slots.end(), p) == slots.end())
      throw ConfigError("template \"" + name + "\": placeholder {" + p +
                        "} not declared as a slot");
  }
}

std::string PromptTemplate::render(
    const std::map<std::string, std::string>& bindings) const {
  for (const auto& slot : slots)
    if (!bindings.count(slot))
      throw ProtocolError("template \"" + name + "\": slot \"" + slot +
                          "\" not bound");
  std::string out = body;
  for (const auto& [slot, value] : bindings) {
    std::string key = "{" + slot + "}";
    size_t pos = 0;
    while ((pos = out.find(key, pos)) != std::string::npos) {
      out.replace(pos, key.size(), value);
      pos += value.size();
    }
  }
  if (!find_placeholders(out).empty())
    throw ProtocolError("template \"" + name +
                        "\": residual placeholder after rendering");
  return out;
}

TemplateSet TemplateSet::load_dir(const std::string& dir) {
  static const std::map<std::string, std::vector<std::string>> expected = {
      {"think", {"instruction"}},
      {"describe", {"instruction"}},
      {"assess", {"target_description"}},
      {"conclude_multi", {"instruction", "assessment_json"}},
      {"conclude_single", {"instruction", "target_description"}},
      {"conclude_dual", {"instruction"}},
      {"score", {"instruction"}},
  };
  TemplateSet set;
  for (const auto& [name, slots] : expected) {
    std::string path = (std::filesystem::path(dir) / (name + ".txt")).string();
    PromptTemplate t{name, slots, read_file(path)};
    t.check();
    set.templates_.emplace(name, std::move(t));
  }
  return set;
}

const PromptTemplate& TemplateSet::get(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end())
    throw ConfigError("unknown template \"" + name + "\"");
  return it->second;
}

ReflectionConclusion parse_conclusion(const std::string& raw) {
  struct Marker {
    const char* text;
    ConclusionTag tag;
  };
  static const Marker markers[] = {{"<#Success>", ConclusionTag::Success},
                                   {"<#Reflection>", ConclusionTag::Reflect},
                                   {"<#Failed>", ConclusionTag::Failed}};
  int total = 0;
  const Marker* found = nullptr;
  size_t found_pos = 0, found_len = 0;
  for (const auto& m : markers) {
    std::string needle = m.text;
    size_t pos = 0;
    while ((pos = raw.find(needle, pos)) != std::string::npos) {
      ++total;
      found = &m;
      found_pos = pos;
      found_len = needle.size();
      pos += needle.size();
    }
  }
  if (total == 0) throw ProtocolError("no conclusion marker in model output");
  if (total > 1)
    throw ProtocolError("multiple conclusion markers in model output");

  std::string before = trim(raw.substr(0, found_pos));
  std::string after = trim(raw.substr(found_pos + found_len));

  ReflectionConclusion c;
  c.tag = found->tag;
  if (c.tag == ConclusionTag::Reflect) {
    c.reasoning = before;
    if (after.empty())
      throw ProtocolError("#Reflection without a refinement instruction");
    c.refinement_instruction =
        Instruction{after, InstructionKind::concrete};
  } else {
    // Trailing text folds into the reasoning so markers at the front of the
    // reply still parse.
    c.reasoning = before.empty() ? after
                 : after.empty() ? before
                                 : before + " " + after;
  }
  if (c.reasoning.empty())
    throw ProtocolError("conclusion carries no reasoning text");
  return c;
}

Reasoner::Reasoner(std::shared_ptr<ReasonerBackend> backend,
                   TemplateSet templates)
    : backend_(std::move(backend)), templates_(std::move(templates)) {}

ChatResult Reasoner::call(const std::string& prompt,
                          const std::vector<ImageRef>& images) {
  ChatRequest req;
  ChatMessage msg;
  msg.role = ChatRole::user;
  msg.parts.push_back(ChatPart::from_text(prompt));
  for (const auto& img : images) msg.parts.push_back(ChatPart::from_image(img));
  req.messages.push_back(std::move(msg));
  ChatResult res = backend_->chat_complete(req);
  if (trim(res.text).empty())
    throw ProtocolError("empty model output");
  return res;
}

namespace {

// Runs parse over the model reply; one reprompt on failure, then the parse
// error surfaces as the protocol error.
template <typename T>
T with_reprompt(const std::function<ChatResult(const std::string&)>& ask,
                const std::string& prompt,
                const std::function<T(const std::string&)>& parse) {
  ChatResult first = ask(prompt);
  try {
    return parse(first.text);
  } catch (const ProtocolError&) {
    ChatResult second = ask(prompt + "\n" + kReprompt);
    return parse(second.text);
  }
}

}  // namespace

Instruction Reasoner::think(const ImageRef& reference,
                            const Instruction& instruction) {
  validate(instruction);
  std::string prompt =
      templates_.get("think").render({{"instruction", instruction.text}});
  ChatResult res = call(prompt, {reference});
  std::string text = trim(res.text);
  Instruction out;
  out.text = text;
  out.kind = (text == trim(instruction.text)) ? InstructionKind::passthrough
                                              : InstructionKind::concrete;
  return out;
}

std::string Reasoner::describe_target(const ImageRef& reference,
                                      const Instruction& instruction) {
  std::string prompt =
      templates_.get("describe").render({{"instruction", instruction.text}});
  // Single-image rule: only the reference is attached.
  return trim(call(prompt, {reference}).text);
}

Assessment Reasoner::assess_result(const ImageRef& result,
                                   const std::string& target_description) {
  if (trim(target_description).empty())
    throw ProtocolError("assess_result requires a target description");
  std::string prompt = templates_.get("assess").render(
      {{"target_description", target_description}});
  auto ask = [&](const std::string& p) { return call(p, {result}); };
  return with_reprompt<Assessment>(ask, prompt, [](const std::string& text) {
    json j = parse_fenced_json(text);
    Assessment a;
    a.consistency_score = score_in_range(j, "consistency_score");
    a.conflicts = j.value("conflicts", std::vector<std::string>{});
    a.omissions = j.value("omissions", std::vector<std::string>{});
    a.hallucinations = j.value("hallucinations", std::vector<std::string>{});
    a.rationale = j.value("rationale", "");
    return a;
  });
}

ReflectionConclusion Reasoner::conclude(
    const ImageRef& reference, const ImageRef& result,
    const Instruction& instruction,
    const std::optional<Assessment>& assessment) {
  json aj = json::object();
  if (assessment) {
    aj = {{"consistency_score", assessment->consistency_score},
          {"conflicts", assessment->conflicts},
          {"omissions", assessment->omissions},
          {"hallucinations", assessment->hallucinations},
          {"rationale", assessment->rationale}};
  }
  std::string prompt = templates_.get("conclude_multi")
                           .render({{"instruction", instruction.text},
                                    {"assessment_json", aj.dump()}});
  auto ask = [&](const std::string& p) {
    return call(p, {reference, result});
  };
  return with_reprompt<ReflectionConclusion>(
      ask, prompt,
      [](const std::string& text) { return parse_conclusion(text); });
}

VIEScore Reasoner::score_vie(const ImageRef& reference, const ImageRef& result,
                             const Instruction& instruction) {
  (void)reference;  // single-image rule: the judge sees only the result
  std::string prompt =
      templates_.get("score").render({{"instruction", instruction.text}});
  auto ask = [&](const std::string& p) { return call(p, {result}); };
  return with_reprompt<VIEScore>(ask, prompt, [](const std::string& text) {
    json j = parse_fenced_json(text);
    double sc = score_in_range(j, "semantic_consistency");
    double pq = score_in_range(j, "perceptual_quality");
    return VIEScore::from_axes(sc, pq);
  });
}

ReflectOutput Reasoner::reflect(ReflectionVariant variant,
                                const ImageRef& reference,
                                const ImageRef& result,
                                const Instruction& instruction) {
  ReflectOutput out;
  switch (variant) {
    case ReflectionVariant::multi_round: {
      out.target_description = describe_target(reference, instruction);
      out.assessment = assess_result(result, *out.target_description);
      out.conclusion = conclude(reference, result, instruction, out.assessment);
      break;
    }
    case ReflectionVariant::single_image: {
      out.target_description = describe_target(reference, instruction);
      std::string prompt =
          templates_.get("conclude_single")
              .render({{"instruction", instruction.text},
                       {"target_description", *out.target_description}});
      // The reference image is deliberately absent from this call.
      auto ask = [&](const std::string& p) { return call(p, {result}); };
      struct Combined {
        Assessment assessment;
        ReflectionConclusion conclusion;
      };
      Combined combined = with_reprompt<Combined>(
          ask, prompt, [](const std::string& text) {
            json j = parse_fenced_json(text);
            Combined c;
            c.assessment.consistency_score =
                score_in_range(j, "consistency_score");
            c.assessment.conflicts =
                j.value("conflicts", std::vector<std::string>{});
            c.assessment.omissions =
                j.value("omissions", std::vector<std::string>{});
            c.assessment.hallucinations =
                j.value("hallucinations", std::vector<std::string>{});
            c.assessment.rationale = j.value("rationale", "");
            // The conclusion follows the fenced block.
            auto fence_end = text.rfind("```");
            std::string tail = fence_end == std::string::npos
                                   ? text
                                   : text.substr(fence_end + 3);
            c.conclusion = parse_conclusion(tail);
            return c;
          });
      out.assessment = combined.assessment;
      out.conclusion = combined.conclusion;
      break;
    }
    case ReflectionVariant::dual_image: {
      std::string prompt = templates_.get("conclude_dual")
                               .render({{"instruction", instruction.text}});
      auto ask = [&](const std::string& p) {
        return call(p, {reference, result});
      };
      out.conclusion = with_reprompt<ReflectionConclusion>(
          ask, prompt,
          [](const std::string& text) { return parse_conclusion(text); });
      break;
    }
  }
  return out;
}

}  // namespace reasonloop
