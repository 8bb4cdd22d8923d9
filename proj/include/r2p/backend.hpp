#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "r2p/prompting.hpp"

namespace r2p {

struct GenRequest {
    PromptBundle messages;
    double temperature = 0.0;
    int max_tokens = 2048;
    std::optional<std::int64_t> seed;
    std::string model_name;
};

struct GenResponse {
    std::string text;
    std::size_t completion_tokens = 0;
    /// True when the count came from the endpoint's usage data; otherwise
    /// completion_tokens is the whitespace proxy of text.
    bool backend_reported = false;
};

struct ReasoningOutput {
    std::string trace;
    std::string final_answer;
    std::string raw;
    std::size_t completion_tokens = 0;
};

struct ModelProfile {
    std::string name;
    bool is_reasoning = true;
    double default_temperature = 0.6;

    /// Reasoning models default to temperature 0.6, non-reasoning to greedy
    /// decoding at 0; an explicit override wins.
    static ModelProfile make(std::string name, bool is_reasoning,
                             std::optional<double> temperature_override = std::nullopt);
};

/// Chat-generation interface. Implementations must be safe to call from
/// multiple pipeline workers at once.
class Backend {
public:
    virtual ~Backend() = default;
    virtual GenResponse generate(const GenRequest& request) = 0;
};

/// Splits a delimiter-wrapped reasoning trace ("<think>...</think>") from the
/// final answer. No delimiters: the whole text is the answer. An unclosed
/// opening delimiter makes the remainder the trace with an empty answer.
ReasoningOutput split_reasoning(const std::string& text);

/// Count of maximal whitespace-separated chunks.
std::size_t count_tokens_proxy(std::string_view text);

/// Wire-format JSON body for a chat-completions request.
nlohmann::json request_to_json(const GenRequest& request);

/// Stable content hash of a request (model, messages, sampling settings),
/// used by the scripted mock to assert prompt content.
std::string request_hash(const GenRequest& request);

struct HttpBackendOptions {
    std::string base_url;          // e.g. "http://localhost:8000"
    std::string api_key;           // empty = no Authorization header
    int max_retries = 3;           // transient-failure retries after the first try
    int backoff_base_ms = 1000;    // waits: base, 2*base, 4*base, ...
    int timeout_seconds = 600;
};

/// Client for an OpenAI-compatible /v1/chat/completions endpoint. Transport
/// failures and 5xx responses are retried with exponential backoff;
/// well-formed error responses (4xx) are not.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendOptions options);
    GenResponse generate(const GenRequest& request) override;

    /// Retries performed over the backend's lifetime (visible in run logs).
    std::size_t total_retries() const;

private:
    HttpBackendOptions options_;
    std::string host_;
    mutable std::atomic<std::size_t> retries_{0};
};

}  // namespace r2p
