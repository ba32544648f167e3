#include "reasonloop/backends.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>

#include "reasonloop/errors.hpp"
#include "reasonloop/http_backends.hpp"
#include "reasonloop/sim_world.hpp"
#include "reasonloop/util.hpp"

namespace reasonloop {

std::string to_string(ChatRole r) {
  switch (r) {
    case ChatRole::system: return "system";
    case ChatRole::user: return "user";
    case ChatRole::assistant: return "assistant";
  }
  return "user";
}

std::string ChatRequest::joined_text() const {
  std::string out;
  for (const auto& m : messages)
    for (const auto& p : m.parts)
      if (p.text) {
        if (!out.empty()) out += "\n";
        out += *p.text;
      }
  return out;
}

std::vector<ImageRef> ChatRequest::images() const {
  std::vector<ImageRef> out;
  for (const auto& m : messages)
    for (const auto& p : m.parts)
      if (p.image) out.push_back(*p.image);
  return out;
}

void validate(const ChatRequest& r, const std::string& path) {
  bool has_user = false;
  for (const auto& m : r.messages)
    if (m.role == ChatRole::user) has_user = true;
  if (!has_user)
    throw ValidationError(path + ".messages",
                          "at least one user message required");
  if (r.temperature < 0)
    throw ValidationError(path + ".temperature", "must be >= 0");
  if (r.max_tokens <= 0)
    throw ValidationError(path + ".max_tokens", "must be > 0");
}

void validate(const EditRequest& r, const std::string& path) {
  validate(r.reference, path + ".reference");
  validate(r.instruction, path + ".instruction");
  if (r.steps < 1) throw ValidationError(path + ".steps", "must be >= 1");
  if (!(r.guidance > 0))
    throw ValidationError(path + ".guidance", "must be > 0");
}

void validate(const WorldConfig& c, const std::string& path) {
  auto prob = [&](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0))
      throw ValidationError(path + "." + name, "must be in [0,1]");
  };
  prob(c.flaw_probability, "flaw_probability");
  prob(c.correction_probability, "correction_probability");
  if (!(c.quality_noise_sd >= 0.0))
    throw ValidationError(path + ".quality_noise_sd", "must be >= 0");
  if (!(c.base_quality >= 0.0 && c.base_quality <= 10.0))
    throw ValidationError(path + ".base_quality", "must be in [0,10]");
}

std::int64_t SystemClock::now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string synthetic_image_bytes(const std::string& id) {
  static const std::string png_magic = "\x89PNG\r\n\x1a\n";
  return png_magic + id;
}

std::string fetch_image_bytes(const ImageRef& ref) {
  const std::string& uri = ref.uri;
  auto scheme_rest = [&](const char* scheme) -> std::optional<std::string> {
    std::string s = scheme;
    if (uri.rfind(s, 0) == 0) return uri.substr(s.size());
    return std::nullopt;
  };
  if (auto id = scheme_rest("sim://")) return synthetic_image_bytes(*id);
  if (auto id = scheme_rest("scripted://")) return synthetic_image_bytes(*id);
  if (auto path = scheme_rest("file://")) return read_file(*path);
  return read_file(uri);
}

ImageRef resolve_image(const std::string& uri) {
  ImageRef probe;
  probe.uri = uri;
  return image_ref_from_bytes(uri, fetch_image_bytes(probe));
}

// --- ScriptedReasoner ------------------------------------------------------

ScriptedReasoner& ScriptedReasoner::when(std::string substring,
                                         std::vector<std::string> responses) {
  rules_.push_back({std::move(substring), std::move(responses), 0});
  return *this;
}

ChatResult ScriptedReasoner::chat_complete(const ChatRequest& request) {
  validate(request);
  std::string text = request.joined_text();
  for (auto& rule : rules_) {
    if (text.find(rule.substring) == std::string::npos) continue;
    if (rule.responses.empty())
      throw MalformedBodyError("scripted", "rule has no responses");
    size_t i = std::min(rule.next, rule.responses.size() - 1);
    ++rule.next;
    ChatResult out;
    out.text = rule.responses[i];
    out.usage.prompt_tokens = static_cast<int>(text.size() / 4);
    out.usage.completion_tokens = static_cast<int>(out.text.size() / 4);
    return out;
  }
  throw MalformedBodyError("scripted",
                           "no scripted rule matches request: " +
                               text.substr(0, std::min<size_t>(120, text.size())));
}

// --- ScriptedGenerator -----------------------------------------------------

ScriptedGenerator& ScriptedGenerator::map_fixture(std::string instruction_text,
                                                  std::string fixture_path) {
  fixtures_[std::move(instruction_text)] = std::move(fixture_path);
  return *this;
}

ImageRef ScriptedGenerator::edit_image(const EditRequest& request) {
  validate(request);
  auto it = fixtures_.find(request.instruction.text);
  if (it != fixtures_.end()) {
    std::string bytes = read_file(it->second);
    return image_ref_from_bytes(it->second, bytes);
  }
  std::string id = to_hex16(mix_hash(
      static_cast<std::uint64_t>(request.seed), request.reference.sha256,
      request.instruction.text));
  ImageRef out;
  out.uri = "scripted://" + id;
  out.media_type = MediaType::png;
  out.sha256 = sha256_hex(synthetic_image_bytes(id));
  return out;
}

// --- Config ----------------------------------------------------------------

namespace {

EndpointConfig endpoint_from_json(const nlohmann::json& j) {
  EndpointConfig c;
  c.endpoint = j.value("endpoint", "");
  c.model = j.value("model", "");
  c.api_key_env = j.value("api_key_env", "");
  c.retry_budget = j.value("retry_budget", 2);
  c.timeout_ms = j.value("timeout_ms", 30000);
  c.backoff_base_ms = j.value("backoff_base_ms", 250);
  return c;
}

}  // namespace

BackendConfig load_backend_config(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded())
    throw ConfigError("backend config is not valid JSON: " + path);
  BackendConfig c;
  std::string mode = j.value("mode", "simulated");
  if (mode == "live")
    c.mode = BackendMode::live;
  else if (mode == "scripted")
    c.mode = BackendMode::scripted;
  else if (mode == "simulated")
    c.mode = BackendMode::simulated;
  else
    throw ConfigError("unknown backend mode \"" + mode + "\"");
  if (j.contains("reasoner")) c.reasoner = endpoint_from_json(j["reasoner"]);
  if (j.contains("generator")) c.generator = endpoint_from_json(j["generator"]);
  if (j.contains("world")) {
    const auto& w = j["world"];
    c.world.flaw_probability = w.value("flaw_probability", 0.0);
    c.world.correction_probability = w.value("correction_probability", 1.0);
    c.world.quality_noise_sd = w.value("quality_noise_sd", 0.0);
    c.world.base_quality = w.value("base_quality", 8.0);
    validate(c.world);
  }
  c.world_seed = j.value("world_seed", 0);
  c.script_path = j.value("script_path", "");
  return c;
}

BackendSet make_backends(const BackendConfig& config) {
  BackendSet set;
  switch (config.mode) {
    case BackendMode::simulated: {
      auto world = SimulatedWorld::create(config.world, config.world_seed);
      set.reasoner = world->reasoner();
      set.generator = world->generator();
      set.clock = std::make_shared<FakeClock>();
      break;
    }
    case BackendMode::scripted: {
      auto reasoner = std::make_shared<ScriptedReasoner>();
      auto generator = std::make_shared<ScriptedGenerator>();
      if (!config.script_path.empty()) {
        nlohmann::json j = nlohmann::json::parse(read_file(config.script_path));
        for (const auto& rule : j.value("reasoner", nlohmann::json::array()))
          reasoner->when(rule.at("when").get<std::string>(),
                         rule.at("responses").get<std::vector<std::string>>());
        for (const auto& [k, v] :
             j.value("generator_fixtures", nlohmann::json::object()).items())
          generator->map_fixture(k, v.get<std::string>());
      }
      set.reasoner = reasoner;
      set.generator = generator;
      set.clock = std::make_shared<FakeClock>();
      break;
    }
    case BackendMode::live: {
      set.reasoner = std::make_shared<HttpReasonerBackend>(config.reasoner);
      set.generator = std::make_shared<HttpGeneratorBackend>(config.generator);
      set.clock = std::make_shared<SystemClock>();
      break;
    }
  }
  return set;
}

}  // namespace reasonloop
