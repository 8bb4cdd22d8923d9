#pragma once

#include <string>
#include <vector>

#include "r2p/corpus.hpp"
#include "r2p/retrieval.hpp"

namespace r2p {

enum class Role { System, User, Assistant };

std::string role_name(Role role);
Role parse_role(const std::string& name);

struct Message {
    Role role;
    std::string content;

    bool operator==(const Message&) const = default;
};

struct PromptBundle {
    std::vector<Message> messages;

    bool operator==(const PromptBundle&) const = default;
};

/// Per-task prompt scaffold. `scaffold` contains the placeholder {input};
/// its final paragraph is the answer-format directive.
struct TaskTemplate {
    std::string scaffold;
    std::string directive;
};

/// The prompt text shipped with the library. The files under templates/ are
/// the on-disk form of the same strings; a golden test keeps them in sync.
class TemplateLibrary {
public:
    static const TemplateLibrary& builtin();
    static TemplateLibrary load_dir(const std::string& dir);

    const TaskTemplate& task_template(TaskId task) const;
    const std::string& hrt() const { return hrt_; }

    /// File name a task's template is stored under, e.g. "lamp2n.txt".
    static std::string template_file_name(TaskId task);

private:
    std::vector<std::pair<TaskId, TaskTemplate>> templates_;
    std::string hrt_;
};

/// Marker phrases whose presence in a reasoning trace counts as engaging
/// with the user profile (the profile-facing step names of the template).
const std::vector<std::string>& profile_marker_phrases();

/// Field lines for one profile entry, canonical task fields first.
std::string serialize_profile_entry(const TaskKind& task, const ProfileEntry& entry);

PromptBundle build_base_prompt(const TaskInstance& instance,
                               const TemplateLibrary& templates = TemplateLibrary::builtin());

/// Prepends the selected entries, in selection order, to the first user
/// message; the instruction text is preserved verbatim after the block.
PromptBundle augment_with_profile(const PromptBundle& bundle,
                                  const ContextSelection& selection,
                                  const std::vector<ProfileEntry>& profile,
                                  const TaskKind& task);

/// Inserts the reasoning template as the leading system message. Throws on
/// double injection.
PromptBundle inject_hrt(const PromptBundle& bundle,
                        const TemplateLibrary& templates = TemplateLibrary::builtin());

bool has_hrt(const PromptBundle& bundle,
             const TemplateLibrary& templates = TemplateLibrary::builtin());

/// Appends the candidate-synthesis request: "Possible answers might be: ...".
PromptBundle build_srm_prompt(const PromptBundle& bundle,
                              const std::vector<std::string>& candidates,
                              const TaskKind& task);

/// Summarization request over the given profile entries.
PromptBundle build_pag_prompt(const std::vector<ProfileEntry>& profile, const TaskKind& task);

/// Prepends the profile summary to the first user message. An empty summary
/// leaves the bundle unchanged (the caller flags the run).
PromptBundle merge_summary(const PromptBundle& bundle, const std::string& summary);

PromptBundle build_self_verification_prompt(const PromptBundle& bundle,
                                            const std::string& draft_answer,
                                            const TaskKind& task);

/// Short description of the required answer shape, used when a message
/// refers to the format without repeating the task directive.
std::string format_hint(const TaskKind& task);

}  // namespace r2p
