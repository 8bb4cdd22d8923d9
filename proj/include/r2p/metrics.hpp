#pragma once

#include <map>
#include <string>
#include <vector>

#include "r2p/corpus.hpp"

namespace r2p {

/// Fraction of exact matches after trim + case-fold.
double accuracy(const std::vector<std::string>& preds, const std::vector<std::string>& golds);

/// Unweighted mean of per-label F1 over label_set. Labels with zero support
/// and zero predictions are skipped when skip_absent is set; predictions
/// outside the label set count as a distinct wrong class.
double macro_f1(const std::vector<std::string>& preds,
                const std::vector<std::string>& golds,
                const std::vector<std::string>& label_set,
                bool skip_absent = true);

double mae(const std::vector<int>& preds, const std::vector<int>& golds);
double rmse(const std::vector<int>& preds, const std::vector<int>& golds);

/// Rating parser for regression predictions: first integer substring,
/// clamped to 1..5; unparseable text maps to the midpoint 3.
int parse_rating(const std::string& text);

/// Unigram-overlap F1 with clipped counts, over the retrieval tokenizer.
double rouge_1_f(const std::string& candidate, const std::string& reference);

/// F1 from longest-common-subsequence length over token sequences.
double rouge_l_f(const std::string& candidate, const std::string& reference);

struct EvalResult {
    TaskId task;
    std::map<std::string, double> per_metric;
    std::size_t n_instances = 0;
    std::size_t reps = 1;
    double mean_completion_tokens = 0.0;
};

/// Minimal per-run view the aggregator needs.
struct ScoredRecord {
    std::string instance_id;
    std::size_t rep = 0;
    std::string final_answer;
    std::size_t total_completion_tokens = 0;
};

/// Per-metric mean over repetitions; every repetition must cover the same
/// instance set. mean_completion_tokens averages over all records.
EvalResult aggregate(TaskId task,
                     const std::vector<ScoredRecord>& records,
                     const std::map<std::string, std::string>& golds,
                     std::size_t reps,
                     bool f1_skip_absent = true);

}  // namespace r2p
