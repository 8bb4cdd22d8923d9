#include "r2p/prompting.hpp"

#include <algorithm>
#include <filesystem>

#include "r2p/util.hpp"

namespace r2p {

namespace {

constexpr const char* kHrtText =
    "Please follow these steps to handle user queries and ensure the output meets requirements:\n"
    "1. Question Analysis: Carefully analyze the user input to clarify the intent and specific "
    "needs of the query. Extract key information such as task type (e.g., judgment, generation, "
    "summary) and constraints (e.g., format, scope).\n"
    "2. User Profile Integration: Use the background information provided by the user (e.g., "
    "research field, interests, past queries) to infer preferences and personalize the content. "
    "If no specific profile is available, assume the user needs accurate and professional "
    "answers.\n"
    "3. Retrieval Augmented Generation: If the external information (e.g., references, data) is "
    "referenced, prioritize using the context provided by the user to avoid irrelevant "
    "assumptions.\n"
    "4. Content Generation: Based on the question analysis, user profile, and retrieved "
    "information, generate a preliminary answer that meets the requirements. Ensure the content "
    "is accurate, relevant, and logically clear.\n"
    "5. Format Alignment and Checking: Verify that the output conforms to any specified format "
    "requirements (e.g., \"answer only\" or \"no explanation\"). If no format is specified, "
    "default to a concise and readable style.\n"
    "6. Conciseness Optimization: Remove redundant information and avoid overthinking or "
    "irrelevant details. Ensure the answer directly addresses the core of the query.\n"
    "7. Final Output: Present the final answer clearly and concisely, ensuring it meets user "
    "needs.";

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string directive_for(const TaskKind& task) {
    switch (task.answer_format) {
        case AnswerFormat::BracketedChoice:
            return "Answer with \"[1]\" or \"[2]\" only, without explanation.";
        case AnswerFormat::MemberOfLabelSet:
            return "Answer with exactly one of: " + join(task.label_set, ", ") + ". Do not explain.";
        case AnswerFormat::IntegerInRange:
            return "Answer with a single integer from 1 to 5, without explanation.";
        case AnswerFormat::FreeTextNonempty:
            switch (task.id) {
                case TaskId::LaMP_4: return "Answer with the headline only, without explanation.";
                case TaskId::LaMP_5: return "Answer with the title only, without explanation.";
                default: return "Answer with the paraphrased tweet only, without explanation.";
            }
    }
    return {};
}

std::string preamble_for(TaskId id) {
    switch (id) {
        case TaskId::LaMP_1:
            return "Decide which of the two candidate references is more relevant to the "
                   "author's paper, using the user's publication history.";
        case TaskId::LaMP_2N:
            return "Select the category of the news article, using the user's writing history.";
        case TaskId::LaMP_2M:
            return "Select the tag for the movie description, using the user's tagging history.";
        case TaskId::LaMP_3:
            return "Predict the rating the user would give for the following review, based on "
                   "the user's rating history.";
        case TaskId::LaMP_4:
            return "Generate a news headline for the following article in the user's style.";
        case TaskId::LaMP_5:
            return "Generate a title for the following abstract in the user's style.";
        case TaskId::LaMP_7:
            return "Paraphrase the following tweet in the user's style.";
    }
    return {};
}

const Message* first_user_message(const PromptBundle& bundle) {
    for (const auto& m : bundle.messages) {
        if (m.role == Role::User) return &m;
    }
    return nullptr;
}

}  // namespace

std::string role_name(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

Role parse_role(const std::string& name) {
    if (name == "system") return Role::System;
    if (name == "user") return Role::User;
    if (name == "assistant") return Role::Assistant;
    throw ConfigError("unknown message role: " + name);
}

const TemplateLibrary& TemplateLibrary::builtin() {
    static const TemplateLibrary lib = [] {
        TemplateLibrary l;
        for (const auto& task : TaskKind::all()) {
            TaskTemplate t;
            t.directive = directive_for(task);
            t.scaffold = preamble_for(task.id) + "\n\n{input}\n\n" + t.directive;
            l.templates_.emplace_back(task.id, std::move(t));
        }
        l.hrt_ = kHrtText;
        return l;
    }();
    return lib;
}

std::string TemplateLibrary::template_file_name(TaskId task) {
    std::string name;
    for (char c : TaskKind::get(task).name) {
        if (c == '-') continue;
        name += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return name + ".txt";
}

TemplateLibrary TemplateLibrary::load_dir(const std::string& dir) {
    TemplateLibrary l;
    for (const auto& task : TaskKind::all()) {
        std::string path = (std::filesystem::path(dir) / template_file_name(task.id)).string();
        TaskTemplate t;
        t.scaffold = util::read_file(path);
        if (t.scaffold.find("{input}") == std::string::npos) {
            throw ConfigError("template " + path + " lacks the {input} placeholder");
        }
        // The final paragraph of a template is its answer-format directive.
        std::size_t pos = t.scaffold.rfind("\n\n");
        t.directive = pos == std::string::npos ? t.scaffold : t.scaffold.substr(pos + 2);
        l.templates_.emplace_back(task.id, std::move(t));
    }
    l.hrt_ = util::read_file((std::filesystem::path(dir) / "hrt.txt").string());
    return l;
}

const TaskTemplate& TemplateLibrary::task_template(TaskId task) const {
    for (const auto& [id, t] : templates_) {
        if (id == task) return t;
    }
    throw ConfigError("no template for task");
}

const std::vector<std::string>& profile_marker_phrases() {
    static const std::vector<std::string> markers = {
        "User Profile Integration",
        "Retrieval Augmented Generation",
    };
    return markers;
}

std::string serialize_profile_entry(const TaskKind& task, const ProfileEntry& entry) {
    std::vector<std::string> lines;
    std::vector<std::string> used;
    for (const auto& name : task.profile_fields) {
        auto it = entry.fields.find(name);
        if (it != entry.fields.end()) {
            lines.push_back(name + ": " + it->second);
            used.push_back(name);
        }
    }
    for (const auto& [name, value] : entry.fields) {
        if (std::find(used.begin(), used.end(), name) == used.end()) {
            lines.push_back(name + ": " + value);
        }
    }
    return join(lines, "\n");
}

PromptBundle build_base_prompt(const TaskInstance& instance, const TemplateLibrary& templates) {
    const TaskTemplate& tpl = templates.task_template(instance.task);
    std::string content = tpl.scaffold;
    std::size_t pos = content.find("{input}");
    content.replace(pos, 7, instance.input_text);
    return PromptBundle{{{Role::User, content}}};
}

PromptBundle augment_with_profile(const PromptBundle& bundle,
                                  const ContextSelection& selection,
                                  const std::vector<ProfileEntry>& profile,
                                  const TaskKind& task) {
    if (selection.chosen.empty()) return bundle;

    std::vector<std::string> blocks;
    for (const auto& [entry_id, _] : selection.chosen) {
        const ProfileEntry* found = nullptr;
        for (const auto& e : profile) {
            if (e.entry_id == entry_id) {
                found = &e;
                break;
            }
        }
        if (!found) throw ValidationError("selected entry not in profile: " + entry_id);
        blocks.push_back(serialize_profile_entry(task, *found));
    }
    std::string block = "The following are records from the user's history:\n\n" +
                        join(blocks, "\n\n") + "\n\n";

    PromptBundle out = bundle;
    for (auto& m : out.messages) {
        if (m.role == Role::User) {
            m.content = block + m.content;
            return out;
        }
    }
    throw ValidationError("bundle has no user message to augment");
}

bool has_hrt(const PromptBundle& bundle, const TemplateLibrary& templates) {
    for (const auto& m : bundle.messages) {
        if (m.role == Role::System && m.content == templates.hrt()) return true;
    }
    return false;
}

PromptBundle inject_hrt(const PromptBundle& bundle, const TemplateLibrary& templates) {
    if (has_hrt(bundle, templates)) throw ValidationError("reasoning template already injected");
    PromptBundle out = bundle;
    out.messages.insert(out.messages.begin(), Message{Role::System, templates.hrt()});
    return out;
}

std::string format_hint(const TaskKind& task) {
    switch (task.answer_format) {
        case AnswerFormat::BracketedChoice: return "\"[1]\" or \"[2]\"";
        case AnswerFormat::MemberOfLabelSet: return "one of the allowed labels";
        case AnswerFormat::IntegerInRange: return "a single integer from 1 to 5";
        case AnswerFormat::FreeTextNonempty: return "plain text with no explanation";
    }
    return {};
}

PromptBundle build_srm_prompt(const PromptBundle& bundle,
                              const std::vector<std::string>& candidates,
                              const TaskKind& task) {
    if (candidates.empty()) throw ValidationError("srm prompt requires at least one candidate");
    std::string content = "Possible answers might be: " + join(candidates, ", ") + ".\n" +
                          "Synthesize a single final answer that balances the strengths of these "
                          "candidates. Give only the final answer, as " +
                          format_hint(task) + ".";
    PromptBundle out = bundle;
    out.messages.push_back({Role::User, content});
    return out;
}

PromptBundle build_pag_prompt(const std::vector<ProfileEntry>& profile, const TaskKind& task) {
    if (profile.empty()) throw ValidationError("profile summary requires a non-empty profile");
    std::vector<std::string> blocks;
    for (const auto& e : profile) blocks.push_back(serialize_profile_entry(task, e));
    std::string content = "Summarize the user's preferences and style from the following records:\n\n" +
                          join(blocks, "\n\n") +
                          "\n\nGive a concise natural-language summary of this user.";
    return PromptBundle{{{Role::User, content}}};
}

PromptBundle merge_summary(const PromptBundle& bundle, const std::string& summary) {
    if (summary.empty()) return bundle;
    PromptBundle out = bundle;
    for (auto& m : out.messages) {
        if (m.role == Role::User) {
            m.content = "Summary of the user's preferences: " + summary + "\n\n" + m.content;
            return out;
        }
    }
    throw ValidationError("bundle has no user message to merge summary into");
}

PromptBundle build_self_verification_prompt(const PromptBundle& bundle,
                                            const std::string& draft_answer,
                                            const TaskKind& task) {
    std::string content = "Here is a draft answer: " + draft_answer + "\n" +
                          "Verify the draft against the task instructions above. If it is wrong "
                          "or off-format, correct it. Give only the final answer, as " +
                          format_hint(task) + ".";
    PromptBundle out = bundle;
    out.messages.push_back({Role::User, content});
    return out;
}

}  // namespace r2p
