#include "r2p/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "r2p/util.hpp"

namespace r2p {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        unsigned char c = static_cast<unsigned char>(ch);
        bool alnum = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
        if (alnum) {
            current += static_cast<char>(std::tolower(c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

Bm25Index::Bm25Index(const std::vector<ProfileEntry>& entries, double k1, double b)
    : k1_(k1), b_(b) {
    if (entries.empty()) throw ValidationError("bm25 index requires a non-empty entry list");
    if (k1 < 0.0) throw ValidationError("bm25 k1 must be >= 0");
    if (b < 0.0 || b > 1.0) throw ValidationError("bm25 b must be in [0, 1]");

    std::size_t total_len = 0;
    for (const auto& entry : entries) {
        if (id_to_pos_.count(entry.entry_id)) {
            throw ValidationError("duplicate entry id in bm25 index: " + entry.entry_id);
        }
        std::vector<std::string> tokens = tokenize(entry.flat_text);
        std::unordered_map<std::string, int> counts;
        for (const auto& t : tokens) ++counts[t];
        for (const auto& [term, _] : counts) ++df_[term];

        id_to_pos_[entry.entry_id] = doc_ids_.size();
        doc_ids_.push_back(entry.entry_id);
        doc_len_.push_back(tokens.size());
        term_counts_.push_back(std::move(counts));
        total_len += tokens.size();
    }
    avg_len_ = static_cast<double>(total_len) / static_cast<double>(doc_ids_.size());
}

const std::unordered_map<std::string, int>& Bm25Index::doc_counts(const std::string& entry_id) const {
    auto it = id_to_pos_.find(entry_id);
    if (it == id_to_pos_.end()) throw ValidationError("unknown entry id: " + entry_id);
    return term_counts_[it->second];
}

std::size_t Bm25Index::doc_len(const std::string& entry_id) const {
    auto it = id_to_pos_.find(entry_id);
    if (it == id_to_pos_.end()) throw ValidationError("unknown entry id: " + entry_id);
    return doc_len_[it->second];
}

std::size_t Bm25Index::df(const std::string& term) const {
    auto it = df_.find(term);
    return it == df_.end() ? 0 : it->second;
}

double Bm25Index::score(const std::vector<std::string>& query_tokens, const std::string& entry_id) const {
    const auto& counts = doc_counts(entry_id);
    const double dl = static_cast<double>(doc_len_[id_to_pos_.at(entry_id)]);
    const double n = static_cast<double>(doc_ids_.size());

    std::set<std::string> distinct(query_tokens.begin(), query_tokens.end());
    double total = 0.0;
    for (const auto& term : distinct) {
        auto tf_it = counts.find(term);
        if (tf_it == counts.end()) continue;  // absent terms contribute 0
        const double tf = static_cast<double>(tf_it->second);
        const double df = static_cast<double>(df_.at(term));
        const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
        const double denom = tf + k1_ * (1.0 - b_ + b_ * dl / avg_len_);
        total += idf * (tf * (k1_ + 1.0)) / denom;
    }
    return total;
}

ContextStrategy parse_context_strategy(const std::string& name) {
    std::string n = util::to_lower(util::trim(name));
    if (n == "none") return ContextStrategy::None;
    if (n == "random") return ContextStrategy::Random;
    if (n == "bm25") return ContextStrategy::Bm25;
    throw ConfigError("unknown context strategy: " + name);
}

std::string context_strategy_name(ContextStrategy s) {
    switch (s) {
        case ContextStrategy::None: return "none";
        case ContextStrategy::Random: return "random";
        case ContextStrategy::Bm25: return "bm25";
    }
    return "none";
}

ContextSelection select_context(const std::vector<ProfileEntry>& profile,
                                const std::string& query_text,
                                ContextStrategy strategy,
                                std::size_t k,
                                std::optional<std::uint64_t> seed,
                                double k1,
                                double b) {
    ContextSelection sel;
    sel.strategy = strategy;
    sel.k = k;

    if (strategy == ContextStrategy::None) {
        if (k != 0) throw ValidationError("strategy none requires k=0");
        return sel;
    }
    if (k == 0) throw ValidationError("k=0 is only valid with strategy none");
    if (profile.empty()) throw ValidationError("k > 0 with empty profile");

    const std::size_t take = std::min(k, profile.size());

    if (strategy == ContextStrategy::Random) {
        if (!seed) throw ValidationError("random strategy requires a seed");
        // Draw over entries sorted by id so the sample depends only on the
        // entry set and the seed, not on profile order.
        std::vector<std::string> ids;
        ids.reserve(profile.size());
        for (const auto& e : profile) ids.push_back(e.entry_id);
        std::sort(ids.begin(), ids.end());
        for (std::size_t i : util::sample_indices(ids.size(), take, *seed)) {
            sel.chosen.emplace_back(ids[i], std::nullopt);
        }
        return sel;
    }

    // bm25
    Bm25Index index(profile, k1, b);
    std::vector<std::string> query = tokenize(query_text);
    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(profile.size());
    for (const auto& entry : profile) {
        scored.emplace_back(entry.entry_id, index.score(query, entry.entry_id));
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (std::size_t i = 0; i < take; ++i) {
        sel.chosen.emplace_back(scored[i].first, scored[i].second);
    }
    return sel;
}

}  // namespace r2p
