#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace r2p {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Input file could not be parsed (message names the offending line).
struct ParseError : Error {
    using Error::Error;
};

/// Well-formed input that violates a contract (message names the instance).
struct ValidationError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

/// Transport exhausted or endpoint unreachable.
struct BackendUnavailable : Error {
    using Error::Error;
};

/// Endpoint answered but the body is not usable; carries the raw body.
struct ProtocolError : Error {
    ProtocolError(const std::string& what, std::string body)
        : Error(what), raw_body(std::move(body)) {}
    std::string raw_body;
};

namespace util {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// trim + ASCII case-fold, the normalization used for answer comparison.
std::string norm_answer(std::string_view s);

/// splitmix64 step. All seeded randomness in the library goes through this
/// generator so a seed value means the same draw sequence everywhere.
std::uint64_t splitmix64(std::uint64_t& state);

/// Fisher-Yates prefix selection: the first `count` positions of a seeded
/// shuffle of [0, n). Draw order is preserved.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, std::uint64_t seed);

std::uint64_t fnv1a64(std::string_view data);
std::string to_hex(std::uint64_t v);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace util
}  // namespace r2p
