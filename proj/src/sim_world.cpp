#include "reasonloop/sim_world.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

#include "reasonloop/errors.hpp"
#include "reasonloop/util.hpp"

namespace reasonloop {

namespace {

// Image id for a sim:// or scripted:// uri; empty for external images.
std::string image_id_of(const ImageRef& ref) {
  for (const char* scheme : {"sim://", "scripted://"}) {
    std::string s = scheme;
    if (ref.uri.rfind(s, 0) == 0) return ref.uri.substr(s.size());
  }
  return "";
}

// Task marker "[task:...]" injected by the stock prompt templates.
std::string task_of(const std::string& prompt) {
  auto start = prompt.find("[task:");
  if (start == std::string::npos) return "";
  auto end = prompt.find(']', start);
  if (end == std::string::npos) return "";
  return prompt.substr(start + 6, end - start - 6);
}

// Extracts the text after the last "Request: " line in the prompt.
std::string request_line_of(const std::string& prompt) {
  const std::string key = "Request: ";
  auto pos = prompt.rfind(key);
  if (pos == std::string::npos) return "";
  auto end = prompt.find('\n', pos);
  std::string text = prompt.substr(pos + key.size(),
                                   end == std::string::npos ? std::string::npos
                                                            : end - pos - key.size());
  return trim(text);
}

}  // namespace

class SimulatedGenerator final : public GeneratorBackend {
 public:
  SimulatedGenerator(std::shared_ptr<SimulatedWorld> world, WorldConfig config)
      : world_(std::move(world)), config_(config) {}

  ImageRef edit_image(const EditRequest& request) override {
    validate(request);
    std::string id = SimulatedWorld::derive_image_id(
        request.reference.sha256, request.instruction.text, request.seed);
    std::string source_id = image_id_of(request.reference);
    std::vector<SimulatedWorld::Flaw> flaws = world_->flaws_of(source_id);
    std::string target =
        SimulatedWorld::refinement_target(request.instruction.text);
    auto hit = std::find_if(flaws.begin(), flaws.end(),
                            [&](const auto& f) { return f.name == target; });
    if (!target.empty() && hit != flaws.end()) {
      // Targeted refinement: may remove the named flaw, never adds one.
      if (world_->correction_draw(id) < config_.correction_probability)
        flaws.erase(hit);
    } else if (world_->flaw_draw(id) < config_.flaw_probability) {
      flaws.push_back({"flaw-" + id.substr(0, 8),
                       config_.correction_probability == 0.0});
    }
    {
      std::lock_guard<std::mutex> lock(world_->mu_);
      world_->state_[id] = flaws;
    }
    ImageRef out;
    out.uri = "sim://" + id;
    out.media_type = MediaType::png;
    out.sha256 = SimulatedWorld::image_sha(id);
    return out;
  }

 private:
  std::shared_ptr<SimulatedWorld> world_;
  WorldConfig config_;
};

class SimulatedReasoner final : public ReasonerBackend {
 public:
  explicit SimulatedReasoner(std::shared_ptr<SimulatedWorld> world)
      : world_(std::move(world)) {}

  ChatResult chat_complete(const ChatRequest& request) override {
    validate(request);
    std::string prompt = request.joined_text();
    std::string task = task_of(prompt);
    auto images = request.images();
    std::string result_id =
        images.empty() ? "" : image_id_of(images.back());
    auto flaws = world_->flaws_of(result_id);

    ChatResult out;
    if (task == "think") {
      out.text = request_line_of(prompt);
    } else if (task == "describe") {
      out.text = "Image after applying: " + request_line_of(prompt);
    } else if (task == "assess" || task == "assess_conclude") {
      nlohmann::ordered_json a{
          {"consistency_score",
           clamp01_to(10.0 - 3.0 * static_cast<double>(flaws.size()), 0, 10)},
          {"conflicts", nlohmann::json::array()},
          {"omissions", nlohmann::json::array()},
          {"hallucinations", nlohmann::json::array()},
          {"rationale", "hidden-state evaluation"}};
      for (const auto& f : flaws) a["conflicts"].push_back(f.name);
      out.text = "```json\n" + a.dump() + "\n```";
      if (task == "assess_conclude") out.text += "\n" + conclusion_text(flaws);
    } else if (task == "conclude") {
      out.text = conclusion_text(flaws);
    } else if (task == "score") {
      double q = world_->quality_of(flaws.size(), result_id);
      nlohmann::ordered_json s{{"semantic_consistency", q},
                               {"perceptual_quality", q}};
      out.text = "```json\n" + s.dump() + "\n```";
    } else if (task == "classify") {
      out.text = classify(request_line_of(prompt));
    } else if (task == "annotate_abstract") {
      out.text = "Give the image the feel of: " + request_line_of(prompt);
    } else if (task == "annotate_decompose") {
      out.text = "Apply the following adjustments. " + request_line_of(prompt);
    } else if (task == "review") {
      out.text = "accept";
    } else {
      throw MalformedBodyError("simulated",
                               "prompt carries no known [task:...] marker");
    }
    out.usage.prompt_tokens = static_cast<int>(prompt.size() / 4);
    out.usage.completion_tokens = static_cast<int>(out.text.size() / 4);
    return out;
  }

 private:
  static std::string conclusion_text(
      const std::vector<SimulatedWorld::Flaw>& flaws) {
    if (flaws.empty())
      return "The result matches the target description. <#Success>";
    if (std::any_of(flaws.begin(), flaws.end(),
                    [](const auto& f) { return f.irrecoverable; }))
      return "The result carries an irrecoverable defect. <#Failed>";
    return "A residual artifact remains in the result. <#Reflection> "
           "Remove the artifact " + flaws.front().name + " from the image.";
  }

  // Deterministic stand-in for the classify annotator: short imperative
  // sentences count as simple, everything else as complex.
  static std::string classify(const std::string& instruction) {
    int words = 1;
    for (char c : instruction)
      if (c == ' ') ++words;
    bool imperative = !instruction.empty() && instruction.back() == '.';
    return (imperative && words <= 8) ? "simple" : "complex";
  }

  std::shared_ptr<SimulatedWorld> world_;
};

std::shared_ptr<SimulatedWorld> SimulatedWorld::create(
    const WorldConfig& config, std::int64_t seed) {
  validate(config);
  return std::shared_ptr<SimulatedWorld>(new SimulatedWorld(config, seed));
}

std::shared_ptr<ReasonerBackend> SimulatedWorld::reasoner() {
  return std::make_shared<SimulatedReasoner>(shared_from_this());
}

std::shared_ptr<GeneratorBackend> SimulatedWorld::generator() {
  return generator_with(config_);
}

std::shared_ptr<GeneratorBackend> SimulatedWorld::generator_with(
    const WorldConfig& config) {
  validate(config);
  return std::make_shared<SimulatedGenerator>(shared_from_this(), config);
}

std::vector<SimulatedWorld::Flaw> SimulatedWorld::flaws_of(
    const std::string& image_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = state_.find(image_id);
  return it == state_.end() ? std::vector<Flaw>{} : it->second;
}

std::string SimulatedWorld::derive_image_id(const std::string& reference_sha,
                                            const std::string& instruction_text,
                                            std::int64_t edit_seed) {
  return to_hex16(mix_hash(static_cast<std::uint64_t>(edit_seed),
                           reference_sha, instruction_text));
}

std::string SimulatedWorld::image_sha(const std::string& image_id) {
  return sha256_hex(synthetic_image_bytes(image_id));
}

double SimulatedWorld::flaw_draw(const std::string& image_id) const {
  return hash_uniform(
      mix_hash(static_cast<std::uint64_t>(seed_), "flaw", image_id));
}

double SimulatedWorld::correction_draw(const std::string& image_id) const {
  return hash_uniform(
      mix_hash(static_cast<std::uint64_t>(seed_), "fix", image_id));
}

double SimulatedWorld::noise_draw(const std::string& image_id) const {
  return config_.quality_noise_sd *
         hash_normal(mix_hash(static_cast<std::uint64_t>(seed_), "noise",
                              image_id));
}

double SimulatedWorld::quality_of(size_t flaw_count,
                                  const std::string& image_id) const {
  double q = config_.base_quality - 3.0 * static_cast<double>(flaw_count) +
             noise_draw(image_id);
  return round4(clamp01_to(q, 0.0, 10.0));
}

std::string SimulatedWorld::refinement_target(
    const std::string& instruction_text) {
  auto pos = instruction_text.find("flaw-");
  if (pos == std::string::npos) return "";
  std::string rest = instruction_text.substr(pos + 5);
  std::string digits;
  for (char c : rest) {
    if (!std::isxdigit(static_cast<unsigned char>(c))) break;
    digits.push_back(c);
  }
  if (digits.size() != 8) return "";
  return "flaw-" + digits;
}

std::pair<std::shared_ptr<ReasonerBackend>, std::shared_ptr<GeneratorBackend>>
simulated_world(const WorldConfig& config, std::int64_t seed) {
  auto world = SimulatedWorld::create(config, seed);
  return {world->reasoner(), world->generator()};
}

}  // namespace reasonloop
