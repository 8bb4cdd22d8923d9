#include "r2p/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "r2p/retrieval.hpp"
#include "r2p/util.hpp"

namespace r2p {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
    if (a != b) {
        throw ValidationError("prediction/gold length mismatch: " + std::to_string(a) + " vs " +
                              std::to_string(b));
    }
    if (a == 0) throw ValidationError("empty prediction list");
}

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    double p = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    double r = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

}  // namespace

double accuracy(const std::vector<std::string>& preds, const std::vector<std::string>& golds) {
    check_lengths(preds.size(), golds.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (util::norm_answer(preds[i]) == util::norm_answer(golds[i])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double macro_f1(const std::vector<std::string>& preds,
                const std::vector<std::string>& golds,
                const std::vector<std::string>& label_set,
                bool skip_absent) {
    check_lengths(preds.size(), golds.size());
    if (label_set.empty()) throw ValidationError("macro_f1 requires a non-empty label set");

    std::vector<std::string> norm_preds, norm_golds;
    for (const auto& p : preds) norm_preds.push_back(util::norm_answer(p));
    for (const auto& g : golds) norm_golds.push_back(util::norm_answer(g));

    double sum = 0.0;
    std::size_t counted = 0;
    for (const auto& raw_label : label_set) {
        const std::string label = util::norm_answer(raw_label);
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < norm_preds.size(); ++i) {
            bool p = norm_preds[i] == label;
            bool g = norm_golds[i] == label;
            if (p && g) ++tp;
            else if (p) ++fp;
            else if (g) ++fn;
        }
        if (skip_absent && tp + fp + fn == 0) continue;
        sum += f1_from_counts(tp, fp, fn);
        ++counted;
    }
    return counted ? sum / static_cast<double>(counted) : 0.0;
}

double mae(const std::vector<int>& preds, const std::vector<int>& golds) {
    check_lengths(preds.size(), golds.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        sum += std::abs(static_cast<double>(preds[i]) - static_cast<double>(golds[i]));
    }
    return sum / static_cast<double>(preds.size());
}

double rmse(const std::vector<int>& preds, const std::vector<int>& golds) {
    check_lengths(preds.size(), golds.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        double d = static_cast<double>(preds[i]) - static_cast<double>(golds[i]);
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(preds.size()));
}

int parse_rating(const std::string& text) {
    std::size_t i = 0;
    while (i < text.size() && !std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
    if (i == text.size()) return 3;
    long value = 0;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
        value = value * 10 + (text[i] - '0');
        if (value > 5) break;
        ++i;
    }
    return static_cast<int>(std::clamp(value, 1L, 5L));
}

double rouge_1_f(const std::string& candidate, const std::string& reference) {
    std::vector<std::string> cand = tokenize(candidate);
    std::vector<std::string> ref = tokenize(reference);
    if (cand.empty() || ref.empty()) return 0.0;

    std::map<std::string, std::size_t> cand_counts, ref_counts;
    for (const auto& t : cand) ++cand_counts[t];
    for (const auto& t : ref) ++ref_counts[t];
    std::size_t overlap = 0;
    for (const auto& [term, count] : cand_counts) {
        auto it = ref_counts.find(term);
        if (it != ref_counts.end()) overlap += std::min(count, it->second);
    }
    double p = static_cast<double>(overlap) / static_cast<double>(cand.size());
    double r = static_cast<double>(overlap) / static_cast<double>(ref.size());
    return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

double rouge_l_f(const std::string& candidate, const std::string& reference) {
    std::vector<std::string> cand = tokenize(candidate);
    std::vector<std::string> ref = tokenize(reference);
    if (cand.empty() || ref.empty()) return 0.0;

    // LCS over tokens, single rolling row.
    std::vector<std::size_t> prev(ref.size() + 1, 0), curr(ref.size() + 1, 0);
    for (std::size_t i = 1; i <= cand.size(); ++i) {
        for (std::size_t j = 1; j <= ref.size(); ++j) {
            curr[j] = cand[i - 1] == ref[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], curr[j - 1]);
        }
        std::swap(prev, curr);
    }
    double lcs = static_cast<double>(prev[ref.size()]);
    double p = lcs / static_cast<double>(cand.size());
    double r = lcs / static_cast<double>(ref.size());
    return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

EvalResult aggregate(TaskId task_id,
                     const std::vector<ScoredRecord>& records,
                     const std::map<std::string, std::string>& golds,
                     std::size_t reps,
                     bool f1_skip_absent) {
    if (reps == 0) throw ValidationError("reps must be >= 1");
    const TaskKind& task = TaskKind::get(task_id);

    // Partition by repetition and check each covers the same instances.
    std::vector<std::vector<const ScoredRecord*>> by_rep(reps);
    for (const auto& rec : records) {
        if (rec.rep >= reps) throw ValidationError("record rep out of range: " + rec.instance_id);
        by_rep[rec.rep].push_back(&rec);
    }
    std::set<std::string> reference_ids;
    for (const auto* rec : by_rep[0]) reference_ids.insert(rec->instance_id);
    for (std::size_t r = 0; r < reps; ++r) {
        std::set<std::string> ids;
        for (const auto* rec : by_rep[r]) ids.insert(rec->instance_id);
        if (ids != reference_ids || ids.size() != by_rep[r].size()) {
            throw ValidationError("ragged repetitions: rep " + std::to_string(r) +
                                  " does not cover the same instance set");
        }
    }
    if (reference_ids.empty()) throw ValidationError("no records to aggregate");

    std::map<std::string, double> metric_sums;
    for (std::size_t r = 0; r < reps; ++r) {
        std::vector<std::string> preds, gold_strs;
        // Deterministic instance order inside a repetition.
        std::vector<const ScoredRecord*> sorted = by_rep[r];
        std::sort(sorted.begin(), sorted.end(), [](const ScoredRecord* a, const ScoredRecord* b) {
            return a->instance_id < b->instance_id;
        });
        for (const auto* rec : sorted) {
            auto it = golds.find(rec->instance_id);
            if (it == golds.end()) throw ValidationError("no gold for instance " + rec->instance_id);
            preds.push_back(rec->final_answer);
            gold_strs.push_back(it->second);
        }

        switch (task.category) {
            case TaskCategory::Classification:
                metric_sums["accuracy"] += accuracy(preds, gold_strs);
                metric_sums["macro_f1"] += macro_f1(preds, gold_strs, task.label_set, f1_skip_absent);
                break;
            case TaskCategory::Regression: {
                std::vector<int> p, g;
                for (const auto& s : preds) p.push_back(parse_rating(s));
                for (const auto& s : gold_strs) g.push_back(parse_rating(s));
                metric_sums["mae"] += mae(p, g);
                metric_sums["rmse"] += rmse(p, g);
                break;
            }
            case TaskCategory::Generation: {
                double r1 = 0.0, rl = 0.0;
                for (std::size_t i = 0; i < preds.size(); ++i) {
                    r1 += rouge_1_f(preds[i], gold_strs[i]);
                    rl += rouge_l_f(preds[i], gold_strs[i]);
                }
                metric_sums["rouge_1"] += r1 / static_cast<double>(preds.size());
                metric_sums["rouge_l"] += rl / static_cast<double>(preds.size());
                break;
            }
        }
    }

    EvalResult out;
    out.task = task_id;
    out.n_instances = reference_ids.size();
    out.reps = reps;
    for (const auto& [name, sum] : metric_sums) {
        out.per_metric[name] = sum / static_cast<double>(reps);
    }
    double token_sum = 0.0;
    for (const auto& rec : records) token_sum += static_cast<double>(rec.total_completion_tokens);
    out.mean_completion_tokens = token_sum / static_cast<double>(records.size());
    return out;
}

}  // namespace r2p
