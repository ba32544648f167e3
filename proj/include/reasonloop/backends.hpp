#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "reasonloop/core_types.hpp"

namespace reasonloop {

enum class ChatRole { system, user, assistant };
std::string to_string(ChatRole r);

// One message part: either text or an image reference.
struct ChatPart {
  std::optional<std::string> text;
  std::optional<ImageRef> image;

  static ChatPart from_text(std::string t) { return {std::move(t), {}}; }
  static ChatPart from_image(ImageRef r) { return {{}, std::move(r)}; }
};

struct ChatMessage {
  ChatRole role = ChatRole::user;
  std::vector<ChatPart> parts;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::optional<std::int64_t> seed;

  // Concatenated text of all parts, in order. Mock dispatch keys off this.
  std::string joined_text() const;
  std::vector<ImageRef> images() const;
};

struct ChatUsage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct ChatResult {
  std::string text;
  ChatUsage usage;
};

struct EditRequest {
  ImageRef reference;
  Instruction instruction;
  std::int64_t seed = 0;
  double guidance = 4.0;  // sampler defaults; config-overridable
  int steps = 28;
};

void validate(const ChatRequest& r, const std::string& path = "chat_request");
void validate(const EditRequest& r, const std::string& path = "edit_request");

class ReasonerBackend {
 public:
  virtual ~ReasonerBackend() = default;
  virtual ChatResult chat_complete(const ChatRequest& request) = 0;
};

class GeneratorBackend {
 public:
  virtual ~GeneratorBackend() = default;
  virtual ImageRef edit_image(const EditRequest& request) = 0;
};

// Wall clock used for latency_ms in traces. Mock backends pair with a fake
// clock so repeated runs produce byte-identical traces.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() = 0;
};

class SystemClock final : public Clock {
 public:
  std::int64_t now_ms() override;
};

class FakeClock final : public Clock {
 public:
  explicit FakeClock(std::int64_t step_ms = 0) : step_ms_(step_ms) {}
  std::int64_t now_ms() override {
    now_ += step_ms_;
    return now_;
  }

 private:
  std::int64_t now_ = 0;
  std::int64_t step_ms_;
};

// Resolves an ImageRef to bytes. Handles plain file paths, file:// uris and
// the synthetic sim:// / scripted:// schemes used by the offline mocks.
std::string fetch_image_bytes(const ImageRef& ref);

// Synthetic deterministic image payload for a mock image id: a PNG signature
// followed by the id, so media sniffing and digests behave like real files.
std::string synthetic_image_bytes(const std::string& id);

// Full ImageRef for a uri/path: fetches the bytes, digests them and sniffs
// the media type.
ImageRef resolve_image(const std::string& uri);

// --- Scripted mocks -------------------------------------------------------

// Replays canned responses. Rules are checked in order against the request's
// joined text (substring match); within a rule, responses pop FIFO and the
// last one repeats. Throws if no rule matches.
class ScriptedReasoner final : public ReasonerBackend {
 public:
  ScriptedReasoner& when(std::string substring,
                         std::vector<std::string> responses);
  ChatResult chat_complete(const ChatRequest& request) override;

 private:
  struct Rule {
    std::string substring;
    std::vector<std::string> responses;
    size_t next = 0;
  };
  std::vector<Rule> rules_;
};

// Deterministic generator: the output image id is a hash of
// (reference digest, instruction text, seed). Optionally maps specific
// instruction texts to fixture files.
class ScriptedGenerator final : public GeneratorBackend {
 public:
  ScriptedGenerator& map_fixture(std::string instruction_text,
                                 std::string fixture_path);
  ImageRef edit_image(const EditRequest& request) override;

 private:
  std::map<std::string, std::string> fixtures_;
};

// --- Backend config (External Interfaces) ---------------------------------

struct EndpointConfig {
  std::string endpoint;
  std::string model;
  std::string api_key_env;  // env var name, never the key itself
  int retry_budget = 2;
  int timeout_ms = 30000;
  int backoff_base_ms = 250;
  std::string output_dir;  // generator only: where fetched images land
};

struct WorldConfig {
  double flaw_probability = 0.0;
  double correction_probability = 1.0;
  double quality_noise_sd = 0.0;
  double base_quality = 8.0;
};

void validate(const WorldConfig& c, const std::string& path = "world");

enum class BackendMode { live, scripted, simulated };

struct BackendConfig {
  BackendMode mode = BackendMode::simulated;
  EndpointConfig reasoner;
  EndpointConfig generator;
  WorldConfig world;
  std::int64_t world_seed = 0;
  std::string script_path;  // scripted mode: JSON rule file
};

BackendConfig load_backend_config(const std::string& path);

struct BackendSet {
  std::shared_ptr<ReasonerBackend> reasoner;
  std::shared_ptr<GeneratorBackend> generator;
  std::shared_ptr<Clock> clock;
};

// Instantiates backends per config. Mock modes get a FakeClock.
BackendSet make_backends(const BackendConfig& config);

}  // namespace reasonloop
