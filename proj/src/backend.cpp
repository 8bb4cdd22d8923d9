#include "r2p/backend.hpp"

#include <atomic>
#include <chrono>
#include <thread>

#include <httplib.h>

#include "r2p/util.hpp"

namespace r2p {

using nlohmann::json;

namespace {
constexpr const char* kThinkOpen = "<think>";
constexpr const char* kThinkClose = "</think>";
}  // namespace

ModelProfile ModelProfile::make(std::string name, bool is_reasoning,
                                std::optional<double> temperature_override) {
    ModelProfile p;
    p.name = std::move(name);
    p.is_reasoning = is_reasoning;
    p.default_temperature = temperature_override.value_or(is_reasoning ? 0.6 : 0.0);
    return p;
}

ReasoningOutput split_reasoning(const std::string& text) {
    ReasoningOutput out;
    out.raw = text;
    std::size_t open = text.find(kThinkOpen);
    if (open == std::string::npos) {
        out.final_answer = text;
        return out;
    }
    // Text before the opening delimiter folds into the trace.
    std::string body = text.substr(0, open) + text.substr(open + std::strlen(kThinkOpen));
    std::size_t close = body.find(kThinkClose);
    if (close == std::string::npos) {
        out.trace = body;
        return out;
    }
    out.trace = body.substr(0, close);
    std::string rest = body.substr(close + std::strlen(kThinkClose));
    std::size_t begin = 0;
    while (begin < rest.size() && std::isspace(static_cast<unsigned char>(rest[begin]))) ++begin;
    out.final_answer = rest.substr(begin);
    return out;
}

std::size_t count_tokens_proxy(std::string_view text) {
    std::size_t count = 0;
    bool in_chunk = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_chunk = false;
        } else if (!in_chunk) {
            in_chunk = true;
            ++count;
        }
    }
    return count;
}

json request_to_json(const GenRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages.messages) {
        messages.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    }
    json body = {
        {"model", request.model_name},
        {"messages", messages},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
    };
    if (request.seed) body["seed"] = *request.seed;
    return body;
}

std::string request_hash(const GenRequest& request) {
    return util::to_hex(util::fnv1a64(request_to_json(request).dump()));
}

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
    if (options_.base_url.empty()) throw ConfigError("backend base url is empty");
    host_ = options_.base_url;
    while (!host_.empty() && host_.back() == '/') host_.pop_back();
}

std::size_t HttpBackend::total_retries() const { return retries_.load(); }

GenResponse HttpBackend::generate(const GenRequest& request) {
    if (request.messages.messages.empty()) throw ValidationError("request has no messages");
    if (request.temperature < 0.0 || request.temperature > 2.0) {
        throw ValidationError("temperature out of [0, 2]");
    }
    const std::string body = request_to_json(request).dump();

    std::string last_error;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
        if (attempt > 0) {
            auto wait = std::chrono::milliseconds(options_.backoff_base_ms << (attempt - 1));
            std::this_thread::sleep_for(wait);
            retries_.fetch_add(1);
        }

        httplib::Client client(host_);
        client.set_connection_timeout(options_.timeout_seconds);
        client.set_read_timeout(options_.timeout_seconds);
        httplib::Headers headers;
        if (!options_.api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + options_.api_key);
        }
        auto res = client.Post("/v1/chat/completions", headers, body, "application/json");

        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "server error: HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            // Well-formed error response: report, never retry.
            throw ProtocolError("endpoint returned HTTP " + std::to_string(res->status), res->body);
        }

        json parsed;
        try {
            parsed = json::parse(res->body);
        } catch (const json::parse_error&) {
            throw ProtocolError("response body is not JSON", res->body);
        }
        if (!parsed.contains("choices") || !parsed["choices"].is_array() ||
            parsed["choices"].empty() || !parsed["choices"][0].contains("message") ||
            !parsed["choices"][0]["message"].contains("content")) {
            throw ProtocolError("response lacks choices[0].message.content", res->body);
        }

        GenResponse out;
        out.text = parsed["choices"][0]["message"]["content"].get<std::string>();
        if (parsed.contains("usage") && parsed["usage"].contains("completion_tokens") &&
            parsed["usage"]["completion_tokens"].is_number()) {
            out.completion_tokens = parsed["usage"]["completion_tokens"].get<std::size_t>();
            out.backend_reported = true;
        } else {
            out.completion_tokens = count_tokens_proxy(out.text);
            out.backend_reported = false;
        }
        return out;
    }
    throw BackendUnavailable("backend unreachable after " +
                             std::to_string(options_.max_retries + 1) + " attempts: " + last_error);
}

}  // namespace r2p
