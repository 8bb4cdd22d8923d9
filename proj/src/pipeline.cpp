#include "r2p/pipeline.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "r2p/util.hpp"

namespace r2p {

namespace {

// Salts for the per-call seed stream; one constant per call site keeps the
// draws distinct and reproducible.
constexpr std::uint64_t kSaltSelection = 0x01;
constexpr std::uint64_t kSaltCandidateBase = 0x100;
constexpr std::uint64_t kSaltInterventionBase = 0x10000;
constexpr std::uint64_t kSaltSynthesis = 0x02;
constexpr std::uint64_t kSaltVerifyCall = 0x03;
constexpr std::uint64_t kSaltPagSummary = 0x04;
constexpr std::uint64_t kSaltPagAnswer = 0x05;

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

bool shares_ngram(const std::vector<std::string>& text_tokens,
                  const std::vector<std::string>& entry_tokens,
                  std::size_t n) {
    if (n == 0 || text_tokens.size() < n || entry_tokens.size() < n) return false;
    std::set<std::string> grams;
    for (std::size_t i = 0; i + n <= entry_tokens.size(); ++i) {
        std::string g;
        for (std::size_t j = 0; j < n; ++j) {
            if (j) g += ' ';
            g += entry_tokens[i + j];
        }
        grams.insert(std::move(g));
    }
    for (std::size_t i = 0; i + n <= text_tokens.size(); ++i) {
        std::string g;
        for (std::size_t j = 0; j < n; ++j) {
            if (j) g += ' ';
            g += text_tokens[i + j];
        }
        if (grams.count(g)) return true;
    }
    return false;
}

const ProfileEntry* find_entry(const std::vector<ProfileEntry>& profile, const std::string& id) {
    for (const auto& e : profile) {
        if (e.entry_id == id) return &e;
    }
    return nullptr;
}

/// Shared per-instance execution state.
struct InstanceRun {
    const PipelineConfig& config;
    const TaskInstance& instance;
    const TaskKind& task;
    Backend& backend;
    const ModelProfile& model;
    RunRecord& record;

    GenRequest make_request(const PromptBundle& bundle, std::uint64_t salt) const {
        GenRequest req;
        req.messages = bundle;
        req.temperature = model.default_temperature;
        req.max_tokens = config.max_tokens;
        req.model_name = model.name;
        if (config.send_seeds) {
            req.seed = static_cast<std::int64_t>(derive_seed(config.seed, salt));
        }
        return req;
    }

    ReasoningOutput call(const GenRequest& req) {
        GenResponse resp = backend.generate(req);
        record.calls.push_back({req, resp});
        ReasoningOutput out = split_reasoning(resp.text);
        out.completion_tokens = resp.completion_tokens;
        return out;
    }

    /// One generation, re-prompted through the checklist loop when rpi is on.
    ReasoningOutput generate_verified(const PromptBundle& bundle, std::size_t candidate, bool rpi) {
        GenRequest req = make_request(bundle, kSaltCandidateBase + candidate);
        ReasoningOutput out = call(req);
        std::size_t used = 0;
        if (rpi) {
            GenRequest prior = req;
            std::string prior_raw = record.calls.back().response.text;
            while (true) {
                ChecklistReport report = verify(task, out, record.selection, instance.profile,
                                                config.ngram_size);
                if (report.all_pass()) break;
                if (used >= config.max_interventions) {
                    record.flags.push_back("rpi_budget_exhausted");
                    break;
                }
                std::optional<std::int64_t> seed;
                if (config.send_seeds) {
                    seed = static_cast<std::int64_t>(derive_seed(
                        config.seed, kSaltInterventionBase + (candidate << 8) + used));
                }
                GenRequest next = build_intervention_request(prior, prior_raw, report, task, seed);
                out = call(next);
                prior = next;
                prior_raw = record.calls.back().response.text;
                ++used;
            }
        }
        record.interventions_per_candidate.push_back(used);
        record.interventions += used;
        return out;
    }
};

PromptBundle strip_hrt(const PromptBundle& bundle, const TemplateLibrary& templates) {
    PromptBundle out;
    for (const auto& m : bundle.messages) {
        if (m.role == Role::System && m.content == templates.hrt()) continue;
        out.messages.push_back(m);
    }
    return out;
}

/// Majority label over candidates (normalized); empty on a tie.
std::string majority_answer(const std::vector<std::string>& candidates) {
    std::map<std::string, std::size_t> counts;
    for (const auto& c : candidates) ++counts[util::norm_answer(c)];
    std::size_t best = 0;
    for (const auto& [_, n] : counts) best = std::max(best, n);
    std::vector<std::string> winners;
    for (const auto& [key, n] : counts) {
        if (n == best) winners.push_back(key);
    }
    if (winners.size() != 1) return {};
    for (const auto& c : candidates) {
        if (util::norm_answer(c) == winners[0]) return c;
    }
    return {};
}

}  // namespace

Strategy parse_strategy(const std::string& name) {
    std::string n = util::to_lower(util::trim(name));
    if (n == "rag") return Strategy::Rag;
    if (n == "pag") return Strategy::Pag;
    if (n == "self-verify" || n == "self_verification" || n == "self-verification") {
        return Strategy::SelfVerification;
    }
    if (n == "r2p") return Strategy::R2p;
    throw ConfigError("unknown strategy: " + name);
}

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Rag: return "rag";
        case Strategy::Pag: return "pag";
        case Strategy::SelfVerification: return "self-verify";
        case Strategy::R2p: return "r2p";
    }
    return "rag";
}

PipelineConfig PipelineConfig::for_strategy(Strategy s) {
    PipelineConfig c;
    c.strategy = s;
    const bool r2p = s == Strategy::R2p;
    c.use_hrt = r2p;
    c.use_rpi = r2p;
    c.use_srm = r2p;
    return c;
}

void PipelineConfig::validate() const {
    if (strategy != Strategy::R2p && (use_hrt || use_rpi || use_srm)) {
        throw ConfigError("hrt/rpi/srm flags are only valid with the r2p strategy");
    }
    if (context == ContextStrategy::None && k != 0) {
        throw ConfigError("context strategy none requires k=0");
    }
    if (max_interventions == 0) throw ConfigError("max_interventions must be >= 1");
    if (ngram_size == 0) throw ConfigError("ngram_size must be >= 1");
    if (max_tokens <= 0) throw ConfigError("max_tokens must be >= 1");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
    std::uint64_t state = base ^ (salt * 0x9E3779B97F4A7C15ULL);
    return util::splitmix64(state);
}

std::vector<ChecklistItem> derive_checklist(const TaskKind& task, std::size_t k) {
    std::vector<ChecklistItem> items;
    items.push_back({"nonempty_final", "final answer is non-blank", Detector::NonemptyFinal});
    items.push_back({"format_valid", "final answer matches the required format", Detector::FormatValid});
    if (task.category == TaskCategory::Classification) {
        items.push_back({"answer_in_label_set", "final answer is one of the task labels",
                         Detector::AnswerInLabelSet});
    }
    if (k > 0) {
        items.push_back({"profile_referenced", "output engages with the retrieved records",
                         Detector::ProfileReferenced});
    }
    return items;
}

ChecklistReport verify(const TaskKind& task,
                       const ReasoningOutput& output,
                       const ContextSelection& selection,
                       const std::vector<ProfileEntry>& profile,
                       std::size_t ngram_size) {
    ChecklistReport report;
    for (const auto& item : derive_checklist(task, selection.k)) {
        bool pass = false;
        switch (item.detector) {
            case Detector::NonemptyFinal:
                pass = !util::trim(output.final_answer).empty();
                break;
            case Detector::FormatValid:
                pass = answer_matches_format(task, output.final_answer);
                break;
            case Detector::AnswerInLabelSet: {
                std::string norm = util::norm_answer(output.final_answer);
                for (const auto& label : task.label_set) {
                    if (util::norm_answer(label) == norm) {
                        pass = true;
                        break;
                    }
                }
                break;
            }
            case Detector::ProfileReferenced: {
                std::string lower_trace = util::to_lower(output.trace);
                for (const auto& marker : profile_marker_phrases()) {
                    if (lower_trace.find(util::to_lower(marker)) != std::string::npos) {
                        pass = true;
                        break;
                    }
                }
                if (!pass) {
                    std::vector<std::string> trace_tokens = tokenize(output.trace);
                    std::vector<std::string> answer_tokens = tokenize(output.final_answer);
                    for (const auto& [entry_id, _] : selection.chosen) {
                        const ProfileEntry* entry = find_entry(profile, entry_id);
                        if (!entry) continue;
                        std::vector<std::string> entry_tokens = tokenize(entry->flat_text);
                        if (shares_ngram(trace_tokens, entry_tokens, ngram_size) ||
                            shares_ngram(answer_tokens, entry_tokens, ngram_size)) {
                            pass = true;
                            break;
                        }
                    }
                }
                break;
            }
        }
        report.verdicts.emplace_back(item.item_id, pass);
        if (!pass && !report.first_failure) report.first_failure = item.item_id;
    }
    return report;
}

std::string intervention_sentence(Detector detector, const TaskKind& task) {
    switch (detector) {
        case Detector::NonemptyFinal:
            return "Wait, I have not given a final answer yet.";
        case Detector::FormatValid:
            switch (task.answer_format) {
                case AnswerFormat::BracketedChoice:
                    return "Wait, the final answer must be exactly \"[1]\" or \"[2]\".";
                case AnswerFormat::MemberOfLabelSet:
                    return "Wait, the final answer must be exactly one of: " +
                           join(task.label_set, ", ") + ".";
                case AnswerFormat::IntegerInRange:
                    return "Wait, the final answer must be a single integer from 1 to 5.";
                case AnswerFormat::FreeTextNonempty:
                    return "Wait, the final answer must be non-empty plain text.";
            }
            break;
        case Detector::AnswerInLabelSet:
            return "Wait, the final answer must be one of the allowed labels: " +
                   join(task.label_set, ", ") + ".";
        case Detector::ProfileReferenced:
            return "Wait, let me analyze the user profile.";
    }
    return {};
}

GenRequest build_intervention_request(const GenRequest& prior,
                                      const std::string& prior_raw,
                                      const ChecklistReport& report,
                                      const TaskKind& task,
                                      std::optional<std::int64_t> seed) {
    if (!report.first_failure) throw ValidationError("intervention requires a failing item");
    Detector detector = Detector::NonemptyFinal;
    for (const auto& item : derive_checklist(task, 1)) {
        if (item.item_id == *report.first_failure) {
            detector = item.detector;
            break;
        }
    }
    GenRequest next = prior;
    next.seed = seed;
    next.messages.messages.push_back({Role::Assistant, prior_raw});
    next.messages.messages.push_back(
        {Role::User, intervention_sentence(detector, task) +
                         " Revise the reasoning starting from the flagged step, keep the steps "
                         "that are already correct, and give the final answer in the required "
                         "format."});
    return next;
}

namespace {

void run_instance_impl(const PipelineConfig& config,
                       const TaskInstance& instance,
                       Backend& backend,
                       const ModelProfile& model,
                       const TemplateLibrary& templates,
                       RunRecord& record) {
    const TaskKind& task = TaskKind::get(instance.task);

    ContextStrategy ctx = config.k == 0 ? ContextStrategy::None : config.context;
    std::optional<std::uint64_t> sel_seed;
    if (ctx == ContextStrategy::Random) sel_seed = derive_seed(config.seed, kSaltSelection);
    record.selection = select_context(instance.profile, instance.input_text, ctx, config.k,
                                      sel_seed, config.bm25_k1, config.bm25_b);

    PromptBundle bundle = build_base_prompt(instance, templates);
    bundle = augment_with_profile(bundle, record.selection, instance.profile, task);
    const bool rpi = config.strategy == Strategy::R2p && config.use_rpi;
    if (config.strategy == Strategy::R2p && config.use_hrt) {
        bundle = inject_hrt(bundle, templates);
    }

    InstanceRun run{config, instance, task, backend, model, record};
    ReasoningOutput initial = run.generate_verified(bundle, 0, rpi);

    switch (config.strategy) {
        case Strategy::Rag:
            record.final_answer = initial.final_answer;
            break;
        case Strategy::SelfVerification: {
            PromptBundle sv = build_self_verification_prompt(bundle, initial.final_answer, task);
            ReasoningOutput verified = run.call(run.make_request(sv, kSaltVerifyCall));
            record.final_answer = verified.final_answer;
            break;
        }
        case Strategy::R2p: {
            if (!config.use_srm || config.n == 0) {
                record.final_answer = initial.final_answer;
                break;
            }
            // The verified initial generation is candidate 1; the rest are
            // fresh draws with their own seeds.
            std::vector<std::string> candidates{initial.final_answer};
            for (std::size_t c = 1; c < config.n; ++c) {
                candidates.push_back(run.generate_verified(bundle, c, rpi).final_answer);
            }
            record.candidates = candidates;

            std::vector<std::string> usable;
            for (const auto& c : candidates) {
                if (!util::trim(c).empty()) usable.push_back(c);
            }
            if (usable.empty()) {
                record.flags.push_back("all_candidates_empty");
                record.final_answer.clear();
                break;
            }
            PromptBundle srm_base = config.srm_keep_hrt ? bundle : strip_hrt(bundle, templates);
            PromptBundle srm = build_srm_prompt(srm_base, usable, task);
            ReasoningOutput synthesis = run.call(run.make_request(srm, kSaltSynthesis));

            if (config.classification_vote && task.category == TaskCategory::Classification) {
                std::string winner = majority_answer(usable);
                record.final_answer = winner.empty() ? synthesis.final_answer : winner;
            } else {
                record.final_answer = synthesis.final_answer;
            }
            break;
        }
        case Strategy::Pag:
            break;  // dispatched by run_instance
    }

    for (const auto& call : record.calls) {
        record.total_completion_tokens += call.response.completion_tokens;
    }
}

void run_pag_impl(const PipelineConfig& config,
                  const TaskInstance& instance,
                  Backend& backend,
                  const ModelProfile& model,
                  const TemplateLibrary& templates,
                  RunRecord& record) {
    const TaskKind& task = TaskKind::get(instance.task);

    // Summarize the context-selected subset when k bounds it, else the whole
    // profile.
    std::vector<ProfileEntry> to_summarize;
    if (config.k > 0) {
        ContextStrategy ctx = config.context == ContextStrategy::None ? ContextStrategy::Bm25
                                                                      : config.context;
        std::optional<std::uint64_t> sel_seed;
        if (ctx == ContextStrategy::Random) sel_seed = derive_seed(config.seed, kSaltSelection);
        record.selection = select_context(instance.profile, instance.input_text, ctx, config.k,
                                          sel_seed, config.bm25_k1, config.bm25_b);
        for (const auto& [entry_id, _] : record.selection.chosen) {
            to_summarize.push_back(*find_entry(instance.profile, entry_id));
        }
    } else {
        to_summarize = instance.profile;
    }

    InstanceRun run{config, instance, task, backend, model, record};

    PromptBundle summary_prompt = build_pag_prompt(to_summarize, task);
    ReasoningOutput summary_out = run.call(run.make_request(summary_prompt, kSaltPagSummary));
    std::string summary = util::trim(summary_out.final_answer);
    if (summary.empty()) record.flags.push_back("empty_summary");

    PromptBundle answer_prompt = merge_summary(build_base_prompt(instance, templates), summary);
    ReasoningOutput answer = run.call(run.make_request(answer_prompt, kSaltPagAnswer));
    record.final_answer = answer.final_answer;

    for (const auto& call : record.calls) {
        record.total_completion_tokens += call.response.completion_tokens;
    }
}

}  // namespace

RunRecord run_instance(const PipelineConfig& config,
                       const TaskInstance& instance,
                       Backend& backend,
                       const ModelProfile& model,
                       const TemplateLibrary& templates) {
    config.validate();
    if (config.strategy == Strategy::Pag) {
        return run_baseline_pag(config, instance, backend, model, templates);
    }
    RunRecord record;
    record.instance_id = instance.instance_id;
    try {
        run_instance_impl(config, instance, backend, model, templates, record);
    } catch (const std::exception& e) {
        throw PipelineError(e.what(), std::move(record));
    }
    return record;
}

RunRecord run_baseline_pag(const PipelineConfig& config,
                           const TaskInstance& instance,
                           Backend& backend,
                           const ModelProfile& model,
                           const TemplateLibrary& templates) {
    config.validate();
    if (instance.profile.empty()) {
        throw ValidationError("profile-summary strategy requires a non-empty profile: " +
                              instance.instance_id);
    }
    RunRecord record;
    record.instance_id = instance.instance_id;
    try {
        run_pag_impl(config, instance, backend, model, templates, record);
    } catch (const std::exception& e) {
        throw PipelineError(e.what(), std::move(record));
    }
    return record;
}

}  // namespace r2p
