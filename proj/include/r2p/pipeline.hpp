#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "r2p/backend.hpp"
#include "r2p/corpus.hpp"
#include "r2p/prompting.hpp"
#include "r2p/retrieval.hpp"
#include "r2p/util.hpp"

namespace r2p {

enum class Strategy { Rag, Pag, SelfVerification, R2p };

Strategy parse_strategy(const std::string& name);
std::string strategy_name(Strategy s);

struct PipelineConfig {
    Strategy strategy = Strategy::R2p;
    bool use_hrt = true;
    bool use_rpi = true;
    bool use_srm = true;
    ContextStrategy context = ContextStrategy::Bm25;
    std::size_t k = 1;
    std::size_t n = 2;                // self-referencing candidate count
    std::size_t max_interventions = 2;  // per generation
    bool classification_vote = false;
    bool srm_keep_hrt = true;         // synthesis call keeps the template message
    std::size_t ngram_size = 3;       // profile_referenced overlap width
    double bm25_k1 = 1.5;
    double bm25_b = 0.75;
    int max_tokens = 2048;
    bool send_seeds = true;
    std::uint64_t seed = 0;           // per-instance seed, derived by the harness

    /// Flags default on for r2p and are forced off elsewhere.
    static PipelineConfig for_strategy(Strategy s);
    void validate() const;
};

enum class Detector { NonemptyFinal, FormatValid, AnswerInLabelSet, ProfileReferenced };

struct ChecklistItem {
    std::string item_id;
    std::string description;
    Detector detector;
};

struct ChecklistReport {
    std::vector<std::pair<std::string, bool>> verdicts;  // (item_id, pass) in checklist order
    std::optional<std::string> first_failure;

    bool all_pass() const { return !first_failure.has_value(); }
};

/// Checklist order: nonempty_final, format_valid, answer_in_label_set
/// (classification only), profile_referenced (only when k > 0).
std::vector<ChecklistItem> derive_checklist(const TaskKind& task, std::size_t k);

/// Runs every checklist detector against one reasoning output.
/// profile_referenced passes when the trace or answer shares a contiguous
/// ngram_size-token run with a selected entry, or the trace names one of the
/// profile-facing template steps.
ChecklistReport verify(const TaskKind& task,
                       const ReasoningOutput& output,
                       const ContextSelection& selection,
                       const std::vector<ProfileEntry>& profile,
                       std::size_t ngram_size = 3);

/// Corrective sentence injected for a failing item. profile_referenced uses
/// exactly "Wait, let me analyze the user profile."
std::string intervention_sentence(Detector detector, const TaskKind& task);

/// Continuation request: prior messages, the raw output as an assistant turn,
/// then the corrective instruction asking for a revision from the flagged
/// step onward.
GenRequest build_intervention_request(const GenRequest& prior,
                                      const std::string& prior_raw,
                                      const ChecklistReport& report,
                                      const TaskKind& task,
                                      std::optional<std::int64_t> seed);

struct RunCall {
    GenRequest request;
    GenResponse response;
};

struct RunRecord {
    std::string instance_id;
    std::size_t rep = 0;
    std::string config_hash;
    ContextSelection selection;
    std::vector<RunCall> calls;
    std::size_t interventions = 0;  // summed over candidates
    std::vector<std::size_t> interventions_per_candidate;
    std::vector<std::string> candidates;  // candidate final answers (srm)
    std::string final_answer;
    std::size_t total_completion_tokens = 0;
    std::vector<std::string> flags;  // e.g. rpi_budget_exhausted, empty_summary
};

/// Raised when an instance fails mid-run; carries whatever the run had
/// recorded up to the failure.
struct PipelineError : Error {
    PipelineError(const std::string& what, RunRecord record)
        : Error(what), partial_record(std::move(record)) {}
    RunRecord partial_record;
};

/// Executes one instance end to end: context selection, prompt assembly,
/// template injection, generation with intervention, self-referencing.
RunRecord run_instance(const PipelineConfig& config,
                       const TaskInstance& instance,
                       Backend& backend,
                       const ModelProfile& model,
                       const TemplateLibrary& templates = TemplateLibrary::builtin());

/// Profile-summary baseline: summary generation, then the answer generation
/// over the merged prompt.
RunRecord run_baseline_pag(const PipelineConfig& config,
                           const TaskInstance& instance,
                           Backend& backend,
                           const ModelProfile& model,
                           const TemplateLibrary& templates = TemplateLibrary::builtin());

/// Deterministic seed stream: mix(base, salt) feeds one splitmix64 step.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);

}  // namespace r2p
