#pragma once

#include <string>

#include "reasonloop/backends.hpp"

namespace reasonloop {

// Chat-completions-style JSON over HTTP; image parts are base64-inlined as
// data urls. Retries transport failures and 5xx responses with exponential
// backoff (backoff_base_ms * 2^attempt); total attempts = 1 + retry_budget.
class HttpReasonerBackend final : public ReasonerBackend {
 public:
  explicit HttpReasonerBackend(EndpointConfig config);
  ChatResult chat_complete(const ChatRequest& request) override;

 private:
  EndpointConfig config_;
};

// POST {endpoint}/v1/images/edits with the reference image base64-inlined.
// The returned image bytes are written under output_dir and referenced by
// path. A body carrying {"error":{"code":"content_policy"}} maps to
// RefusalError; other failures use the shared transport error classes.
class HttpGeneratorBackend final : public GeneratorBackend {
 public:
  explicit HttpGeneratorBackend(EndpointConfig config);
  ImageRef edit_image(const EditRequest& request) override;

 private:
  EndpointConfig config_;
};

}  // namespace reasonloop
