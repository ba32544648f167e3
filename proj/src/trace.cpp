#include "reasonloop/trace.hpp"

#include <nlohmann/json.hpp>

#include <sstream>

#include "reasonloop/errors.hpp"
#include "reasonloop/util.hpp"

namespace reasonloop {

using ojson = nlohmann::ordered_json;

namespace {

ojson image_to_json(const ImageRef& r) {
  return ojson{{"uri", r.uri},
               {"media_type", to_string(r.media_type)},
               {"sha256", r.sha256}};
}

ImageRef image_from_json(const ojson& j) {
  ImageRef r;
  r.uri = j.at("uri").get<std::string>();
  r.media_type = media_type_from_string(j.at("media_type").get<std::string>());
  r.sha256 = j.at("sha256").get<std::string>();
  return r;
}

ojson instruction_to_json(const Instruction& i) {
  return ojson{{"text", i.text}, {"kind", to_string(i.kind)}};
}

Instruction instruction_from_json(const ojson& j) {
  Instruction i;
  i.text = j.at("text").get<std::string>();
  i.kind = instruction_kind_from_string(j.at("kind").get<std::string>());
  return i;
}

ojson policy_to_json(const LoopPolicy& p) {
  return ojson{{"mode", to_string(p.mode)},
               {"max_reflection_rounds", p.max_reflection_rounds},
               {"reroll_attempts", p.reroll_attempts},
               {"reflection_variant", to_string(p.reflection_variant)},
               {"stop_on_success_tag", p.stop_on_success_tag}};
}

LoopPolicy policy_from_json(const ojson& j) {
  LoopPolicy p;
  p.mode = loop_mode_from_string(j.at("mode").get<std::string>());
  p.max_reflection_rounds = j.at("max_reflection_rounds").get<int>();
  p.reroll_attempts = j.at("reroll_attempts").get<int>();
  p.reflection_variant =
      reflection_variant_from_string(j.at("reflection_variant").get<std::string>());
  p.stop_on_success_tag = j.at("stop_on_success_tag").get<bool>();
  return p;
}

double score_from_json(const ojson& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_string()) throw Error(std::string(key) + " must be a decimal string");
  return std::stod(v.get<std::string>());
}

}  // namespace

std::string serialize_trace(const EditSession& s) {
  validate(s);
  std::ostringstream out;
  ojson header{{"version", kTraceVersion},
               {"session_id", s.session_id},
               {"policy", policy_to_json(s.policy)}};
  out << header.dump() << "\n";

  ojson think{{"event", "think"},
              {"reference", image_to_json(s.reference)},
              {"original_instruction", instruction_to_json(s.original_instruction)},
              {"thought", s.thought ? instruction_to_json(*s.thought)
                                    : ojson(nullptr)},
              {"seed", s.seed}};
  out << think.dump() << "\n";

  for (const auto& r : s.rounds) {
    ojson edit{{"event", "edit"},
               {"index", r.index},
               {"instruction", instruction_to_json(r.instruction_used)},
               {"generated", image_to_json(r.generated)},
               {"latency_ms", r.latency_ms}};
    out << edit.dump() << "\n";
    if (r.target_description) {
      ojson e{{"event", "describe"}, {"index", r.index},
              {"text", *r.target_description}};
      out << e.dump() << "\n";
    }
    if (r.assessment) {
      const auto& a = *r.assessment;
      ojson e{{"event", "assess"},
              {"index", r.index},
              {"consistency_score", fmt4(a.consistency_score)},
              {"conflicts", a.conflicts},
              {"omissions", a.omissions},
              {"hallucinations", a.hallucinations},
              {"rationale", a.rationale}};
      out << e.dump() << "\n";
    }
    if (r.conclusion) {
      const auto& c = *r.conclusion;
      ojson e{{"event", "conclude"},
              {"index", r.index},
              {"tag", to_string(c.tag)},
              {"reasoning", c.reasoning},
              {"refinement_instruction",
               c.refinement_instruction
                   ? instruction_to_json(*c.refinement_instruction)
                   : ojson(nullptr)}};
      out << e.dump() << "\n";
    }
    if (r.vie) {
      ojson e{{"event", "score"},
              {"index", r.index},
              {"semantic_consistency", fmt4(r.vie->semantic_consistency)},
              {"perceptual_quality", fmt4(r.vie->perceptual_quality)},
              {"overall", fmt4(r.vie->overall)}};
      out << e.dump() << "\n";
    }
  }

  if (s.status != SessionStatus::Running) {
    ojson stop{{"event", "stop"}, {"status", to_string(s.status)}};
    out << stop.dump() << "\n";
  }
  return out.str();
}

EditSession parse_trace(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string line;
  int lineno = 0;
  EditSession s;
  bool saw_header = false, saw_think = false;

  auto parse_line = [&](const std::string& text) -> ojson {
    ojson j = ojson::parse(text, nullptr, false);
    if (j.is_discarded())
      throw TraceParseError(lineno, "malformed JSON");
    return j;
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) {
      if (in.eof()) break;
      throw TraceParseError(lineno, "blank line inside trace");
    }
    ojson j = parse_line(line);
    try {
      if (!saw_header) {
        std::string version = j.at("version").get<std::string>();
        if (version != kTraceVersion)
          throw UnsupportedVersionError(lineno, version);
        s.session_id = j.at("session_id").get<std::string>();
        s.policy = policy_from_json(j.at("policy"));
        saw_header = true;
        continue;
      }
      std::string event = j.at("event").get<std::string>();
      if (event == "think") {
        if (saw_think) throw TraceParseError(lineno, "duplicate think event");
        s.reference = image_from_json(j.at("reference"));
        s.original_instruction =
            instruction_from_json(j.at("original_instruction"));
        if (!j.at("thought").is_null())
          s.thought = instruction_from_json(j.at("thought"));
        s.seed = j.at("seed").get<std::int64_t>();
        saw_think = true;
        continue;
      }
      if (!saw_think)
        throw TraceParseError(lineno, "event before think line");
      if (event == "stop") {
        s.status = session_status_from_string(j.at("status").get<std::string>());
        continue;
      }
      int index = j.at("index").get<int>();
      if (event == "edit") {
        if (index != static_cast<int>(s.rounds.size()))
          throw TraceParseError(lineno, "non-contiguous round index");
        RoundRecord r;
        r.index = index;
        r.instruction_used = instruction_from_json(j.at("instruction"));
        r.generated = image_from_json(j.at("generated"));
        r.latency_ms = j.at("latency_ms").get<std::int64_t>();
        s.rounds.push_back(std::move(r));
        continue;
      }
      if (s.rounds.empty() || index != s.rounds.back().index)
        throw TraceParseError(lineno, "event index does not match open round");
      RoundRecord& r = s.rounds.back();
      if (event == "describe") {
        r.target_description = j.at("text").get<std::string>();
      } else if (event == "assess") {
        Assessment a;
        a.consistency_score = score_from_json(j, "consistency_score");
        a.conflicts = j.at("conflicts").get<std::vector<std::string>>();
        a.omissions = j.at("omissions").get<std::vector<std::string>>();
        a.hallucinations =
            j.at("hallucinations").get<std::vector<std::string>>();
        a.rationale = j.at("rationale").get<std::string>();
        r.assessment = std::move(a);
      } else if (event == "conclude") {
        ReflectionConclusion c;
        c.tag = conclusion_tag_from_string(j.at("tag").get<std::string>());
        c.reasoning = j.at("reasoning").get<std::string>();
        if (!j.at("refinement_instruction").is_null())
          c.refinement_instruction =
              instruction_from_json(j.at("refinement_instruction"));
        r.conclusion = std::move(c);
      } else if (event == "score") {
        double sc = score_from_json(j, "semantic_consistency");
        double pq = score_from_json(j, "perceptual_quality");
        VIEScore v = VIEScore::from_axes(sc, pq);
        // The stored overall is informational; it must agree with the axes
        // at trace precision.
        if (j.at("overall").get<std::string>() != fmt4(v.overall))
          throw TraceParseError(lineno,
                                "overall does not match sqrt(sc*pq)");
        r.vie = v;
      } else {
        throw TraceParseError(lineno, "unknown event \"" + event + "\"");
      }
    } catch (const TraceParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw TraceParseError(lineno, e.what());
    }
  }
  if (!saw_header) throw TraceParseError(1, "missing header line");
  if (!saw_think) throw TraceParseError(lineno, "missing think line");
  validate(s);
  return s;
}

}  // namespace reasonloop
