#include "reasonloop/http_backends.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "reasonloop/errors.hpp"
#include "reasonloop/util.hpp"

namespace reasonloop {

namespace {

using nlohmann::json;

std::string next_request_id() {
  static std::atomic<std::uint64_t> counter{0};
  return "req-" + to_hex16(mix_hash(counter.fetch_add(1), "request-id"));
}

// Splits "http://host:port/base" into (origin, base path).
std::pair<std::string, std::string> split_endpoint(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw ConfigError("endpoint must include a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string api_key_from_env(const EndpointConfig& c) {
  if (c.api_key_env.empty()) return "";
  const char* v = std::getenv(c.api_key_env.c_str());
  return v ? v : "";
}

// POST with retry. Transport failures and 5xx are retried up to
// retry_budget times; anything else is returned to the caller.
httplib::Result post_with_retry(const EndpointConfig& config,
                                const std::string& path,
                                const std::string& body,
                                const std::string& request_id) {
  auto [origin, base] = split_endpoint(config.endpoint);
  httplib::Client client(origin);
  client.set_connection_timeout(0, config.timeout_ms * 1000LL);
  client.set_read_timeout(config.timeout_ms / 1000, (config.timeout_ms % 1000) * 1000);
  std::string key = api_key_from_env(config);
  httplib::Headers headers{{"X-Request-Id", request_id}};
  if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);

  int attempts = 1 + config.retry_budget;
  httplib::Result res;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      auto delay = std::chrono::milliseconds(
          static_cast<std::int64_t>(config.backoff_base_ms) << (attempt - 1));
      std::this_thread::sleep_for(delay);
    }
    res = client.Post(base + path, headers, body, "application/json");
    if (res && res->status < 500) return res;
  }
  if (!res)
    throw TransportError(request_id, attempts,
                         "transport failure: " + httplib::to_string(res.error()));
  return res;
}

json parse_body(const httplib::Result& res, const std::string& request_id) {
  json j = json::parse(res->body, nullptr, false);
  if (j.is_discarded())
    throw MalformedBodyError(request_id, "response body is not JSON");
  return j;
}

void throw_on_status(const httplib::Result& res, const std::string& request_id) {
  if (res->status >= 400)
    throw HttpStatusError(request_id, res->status, res->body);
}

json chat_request_to_json(const ChatRequest& r, const std::string& model) {
  json messages = json::array();
  for (const auto& m : r.messages) {
    json content = json::array();
    for (const auto& p : m.parts) {
      if (p.text) {
        content.push_back({{"type", "text"}, {"text", *p.text}});
      } else if (p.image) {
        std::string bytes = fetch_image_bytes(*p.image);
        std::string url = "data:image/" + to_string(p.image->media_type) +
                          ";base64," + base64_encode(bytes);
        content.push_back(
            {{"type", "image_url"}, {"image_url", {{"url", url}}}});
      }
    }
    messages.push_back({{"role", to_string(m.role)}, {"content", content}});
  }
  json body{{"model", model},
            {"temperature", r.temperature},
            {"max_tokens", r.max_tokens},
            {"messages", messages}};
  if (r.seed) body["seed"] = *r.seed;
  return body;
}

}  // namespace

HttpReasonerBackend::HttpReasonerBackend(EndpointConfig config)
    : config_(std::move(config)) {}

ChatResult HttpReasonerBackend::chat_complete(const ChatRequest& request) {
  validate(request);
  std::string request_id = next_request_id();
  json body = chat_request_to_json(request, config_.model);
  auto res = post_with_retry(config_, "/v1/chat/completions", body.dump(),
                             request_id);
  throw_on_status(res, request_id);
  json j = parse_body(res, request_id);
  ChatResult out;
  try {
    out.text = j.at("choices").at(0).at("message").at("content")
                   .get<std::string>();
    if (j.contains("usage")) {
      out.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
      out.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
  } catch (const json::exception& e) {
    throw MalformedBodyError(request_id, e.what());
  }
  if (out.text.empty())
    throw MalformedBodyError(request_id, "empty completion text");
  return out;
}

HttpGeneratorBackend::HttpGeneratorBackend(EndpointConfig config)
    : config_(std::move(config)) {
  if (config_.output_dir.empty())
    config_.output_dir =
        (std::filesystem::temp_directory_path() / "reasonloop-images").string();
}

ImageRef HttpGeneratorBackend::edit_image(const EditRequest& request) {
  validate(request);
  std::string request_id = next_request_id();
  std::string ref_bytes = fetch_image_bytes(request.reference);
  json body{{"model", config_.model},
            {"instruction", request.instruction.text},
            {"seed", request.seed},
            {"guidance", request.guidance},
            {"steps", request.steps},
            {"image",
             {{"b64", base64_encode(ref_bytes)},
              {"media_type", to_string(request.reference.media_type)}}}};
  auto res = post_with_retry(config_, "/v1/images/edits", body.dump(),
                             request_id);
  if (res->status >= 400) {
    json err = json::parse(res->body, nullptr, false);
    if (!err.is_discarded() &&
        err.value("error", json::object()).value("code", "") ==
            "content_policy")
      throw RefusalError(request_id, "content policy refusal");
    throw HttpStatusError(request_id, res->status, res->body);
  }
  json j = parse_body(res, request_id);
  std::string bytes;
  try {
    bytes = base64_decode(j.at("image_b64").get<std::string>());
  } catch (const json::exception& e) {
    throw MalformedBodyError(request_id, e.what());
  }
  std::string path = (std::filesystem::path(config_.output_dir) /
                      (sha256_hex(bytes).substr(0, 16) + ".img"))
                         .string();
  write_file(path, bytes);
  return image_ref_from_bytes(path, bytes);
}

}  // namespace reasonloop
