#include "r2p/mock_backend.hpp"

#include "r2p/util.hpp"

namespace r2p {

using nlohmann::json;

namespace {

MockStep step_from_json(const json& j) {
    MockStep s;
    if (j.contains("fail")) s.fail = j["fail"].get<bool>();
    if (j.contains("text")) s.text = j["text"].get<std::string>();
    if (j.contains("completion_tokens")) s.completion_tokens = j["completion_tokens"].get<std::size_t>();
    if (j.contains("expect_hash")) s.expect_hash = j["expect_hash"].get<std::string>();
    if (j.contains("expect_contains")) s.expect_contains = j["expect_contains"].get<std::string>();
    return s;
}

bool messages_contain(const GenRequest& request, const std::string& needle) {
    if (needle.empty()) return true;
    for (const auto& m : request.messages.messages) {
        if (m.content.find(needle) != std::string::npos) return true;
    }
    return false;
}

GenResponse make_response(const std::string& text, std::optional<std::size_t> tokens) {
    GenResponse out;
    out.text = text;
    if (tokens) {
        out.completion_tokens = *tokens;
        out.backend_reported = true;
    } else {
        out.completion_tokens = count_tokens_proxy(text);
        out.backend_reported = false;
    }
    return out;
}

}  // namespace

MockBackend::MockBackend(MockBackend&& other) noexcept
    : sequence_mode_(other.sequence_mode_),
      steps_(std::move(other.steps_)),
      rules_(std::move(other.rules_)),
      default_reply_(std::move(other.default_reply_)),
      next_step_(other.next_step_),
      transcript_(std::move(other.transcript_)) {}

MockBackend MockBackend::sequence(std::vector<MockStep> steps) {
    MockBackend b;
    b.sequence_mode_ = true;
    b.steps_ = std::move(steps);
    return b;
}

MockBackend MockBackend::rules(std::vector<MockRule> rules, MockStep default_reply) {
    MockBackend b;
    b.sequence_mode_ = false;
    b.rules_ = std::move(rules);
    b.default_reply_ = std::move(default_reply);
    return b;
}

MockBackend MockBackend::from_json(const json& script) {
    std::string mode = script.value("mode", "sequence");
    if (mode == "sequence") {
        std::vector<MockStep> steps;
        for (const auto& s : script.at("steps")) steps.push_back(step_from_json(s));
        return sequence(std::move(steps));
    }
    if (mode == "rules") {
        std::vector<MockRule> rules;
        if (script.contains("rules")) {
            for (const auto& r : script["rules"]) {
                MockRule rule;
                rule.contains = r.value("contains", "");
                rule.text = r.at("text").get<std::string>();
                if (r.contains("completion_tokens")) {
                    rule.completion_tokens = r["completion_tokens"].get<std::size_t>();
                }
                rules.push_back(std::move(rule));
            }
        }
        if (!script.contains("default")) throw ConfigError("rules-mode mock script needs a default reply");
        return MockBackend::rules(std::move(rules), step_from_json(script["default"]));
    }
    throw ConfigError("unknown mock script mode: " + mode);
}

MockBackend MockBackend::from_file(const std::string& path) {
    json script;
    try {
        script = json::parse(util::read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("mock script " + path + " is not valid JSON: " + std::string(e.what()));
    }
    return from_json(script);
}

GenResponse MockBackend::generate(const GenRequest& request) {
    if (request.messages.messages.empty()) throw ValidationError("request has no messages");
    std::lock_guard<std::mutex> lock(mutex_);

    const MockStep* step = nullptr;
    std::optional<MockStep> matched;
    if (sequence_mode_) {
        if (next_step_ >= steps_.size()) {
            throw BackendUnavailable("mock script exhausted after " + std::to_string(steps_.size()) +
                                     " calls");
        }
        step = &steps_[next_step_];
        if (step->expect_hash && *step->expect_hash != request_hash(request)) {
            throw ProtocolError("mock step " + std::to_string(next_step_) +
                                    " expected request hash " + *step->expect_hash + " but got " +
                                    request_hash(request),
                                request_to_json(request).dump());
        }
        if (step->expect_contains && !messages_contain(request, *step->expect_contains)) {
            throw ProtocolError("mock step " + std::to_string(next_step_) +
                                    " expected a message containing: " + *step->expect_contains,
                                request_to_json(request).dump());
        }
        ++next_step_;
    } else {
        for (const auto& rule : rules_) {
            if (messages_contain(request, rule.contains)) {
                matched = MockStep{rule.text, rule.completion_tokens, {}, {}, false};
                break;
            }
        }
        if (!matched) matched = default_reply_;
        step = &*matched;
    }

    if (step->fail) {
        throw BackendUnavailable("mock scripted failure at call " + std::to_string(transcript_.size()));
    }
    GenResponse response = make_response(step->text, step->completion_tokens);
    transcript_.emplace_back(request_to_json(request), response);
    return response;
}

std::size_t MockBackend::calls_made() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return transcript_.size();
}

std::vector<std::pair<json, GenResponse>> MockBackend::transcript() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return transcript_;
}

}  // namespace r2p
