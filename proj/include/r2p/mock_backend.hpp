#pragma once

#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "r2p/backend.hpp"

namespace r2p {

/// One scripted reply. Omitting completion_tokens falls back to the
/// whitespace proxy (backend_reported=false).
struct MockStep {
    std::string text;
    std::optional<std::size_t> completion_tokens;
    std::optional<std::string> expect_hash;      // sequence mode: request hash must match
    std::optional<std::string> expect_contains;  // sequence mode: some message must contain this
    bool fail = false;                           // simulate an unreachable backend
};

struct MockRule {
    std::string contains;  // matched against message contents; empty matches everything
    std::string text;
    std::optional<std::size_t> completion_tokens;
};

/// Deterministic scripted backend.
///
/// Sequence mode replays steps in call order and can assert each request's
/// content hash, so tests pin both the call sequence and the prompts.
/// Rules mode answers as a pure function of the request content, which keeps
/// runs reproducible under any worker count.
class MockBackend : public Backend {
public:
    static MockBackend sequence(std::vector<MockStep> steps);
    static MockBackend rules(std::vector<MockRule> rules, MockStep default_reply);

    /// Loads a script file: {"mode": "sequence"|"rules", ...}.
    static MockBackend from_file(const std::string& path);
    static MockBackend from_json(const nlohmann::json& script);

    MockBackend(MockBackend&& other) noexcept;

    GenResponse generate(const GenRequest& request) override;

    std::size_t calls_made() const;
    /// Complete request/response transcript in call order.
    std::vector<std::pair<nlohmann::json, GenResponse>> transcript() const;

private:
    MockBackend() = default;

    bool sequence_mode_ = true;
    std::vector<MockStep> steps_;
    std::vector<MockRule> rules_;
    MockStep default_reply_;

    mutable std::mutex mutex_;
    std::size_t next_step_ = 0;
    std::vector<std::pair<nlohmann::json, GenResponse>> transcript_;
};

}  // namespace r2p
