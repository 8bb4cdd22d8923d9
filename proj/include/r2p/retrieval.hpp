#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "r2p/corpus.hpp"

namespace r2p {

/// Lowercases and splits on maximal runs of non-alphanumeric (ASCII) bytes;
/// empty tokens are dropped.
std::vector<std::string> tokenize(std::string_view text);

/// Okapi BM25 over profile entries with the non-negative IDF variant
/// IDF(t) = ln((N - df + 0.5) / (df + 0.5) + 1).
class Bm25Index {
public:
    Bm25Index(const std::vector<ProfileEntry>& entries, double k1 = 1.5, double b = 0.75);

    double score(const std::vector<std::string>& query_tokens, const std::string& entry_id) const;

    std::size_t n_docs() const { return doc_ids_.size(); }
    double avg_len() const { return avg_len_; }
    std::size_t doc_len(const std::string& entry_id) const;
    std::size_t df(const std::string& term) const;
    double k1() const { return k1_; }
    double b() const { return b_; }

private:
    const std::unordered_map<std::string, int>& doc_counts(const std::string& entry_id) const;

    std::vector<std::string> doc_ids_;
    std::unordered_map<std::string, std::size_t> id_to_pos_;
    std::vector<std::unordered_map<std::string, int>> term_counts_;
    std::vector<std::size_t> doc_len_;
    std::unordered_map<std::string, std::size_t> df_;
    double avg_len_ = 0.0;
    double k1_;
    double b_;
};

enum class ContextStrategy { None, Random, Bm25 };

ContextStrategy parse_context_strategy(const std::string& name);
std::string context_strategy_name(ContextStrategy s);

struct ContextSelection {
    ContextStrategy strategy = ContextStrategy::None;
    std::size_t k = 0;
    /// (entry_id, score); score only present under bm25. bm25 order is score
    /// descending with ties broken by ascending entry_id.
    std::vector<std::pair<std::string, std::optional<double>>> chosen;
};

/// Selects min(k, |profile|) context entries. k=0 is only valid with the
/// none strategy; the random strategy requires a seed.
ContextSelection select_context(const std::vector<ProfileEntry>& profile,
                                const std::string& query_text,
                                ContextStrategy strategy,
                                std::size_t k,
                                std::optional<std::uint64_t> seed = std::nullopt,
                                double k1 = 1.5,
                                double b = 0.75);

}  // namespace r2p
