#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace r2p {

enum class TaskId {
    LaMP_1,
    LaMP_2N,
    LaMP_2M,
    LaMP_3,
    LaMP_4,
    LaMP_5,
    LaMP_7,
};

enum class TaskCategory { Classification, Regression, Generation };

enum class AnswerFormat {
    BracketedChoice,   // exactly "[1]" or "[2]"
    MemberOfLabelSet,  // one of the task's labels, case-insensitive
    IntegerInRange,    // bare integer 1..5
    FreeTextNonempty,
};

/// Static per-task contract: category, labels, answer format, metric set,
/// and the field order used to flatten profile entries.
struct TaskKind {
    TaskId id;
    std::string name;  // canonical id string, e.g. "LaMP-3"
    TaskCategory category;
    std::vector<std::string> label_set;       // empty unless classification
    AnswerFormat answer_format;
    std::vector<std::string> metrics;         // metric identifiers
    std::vector<std::string> profile_fields;  // canonical field order for flat_text

    static const TaskKind& get(TaskId id);
    /// Accepts "LaMP-3", "lamp-3", "lamp3" and the like.
    static const TaskKind& parse(const std::string& name);
    static const std::vector<TaskKind>& all();
};

struct ProfileEntry {
    std::string entry_id;
    std::map<std::string, std::string> fields;
    std::string flat_text;  // field values joined by single spaces, canonical order first
};

struct TaskInstance {
    std::string instance_id;
    std::string user_id;
    TaskId task;
    std::string input_text;
    std::vector<ProfileEntry> profile;
    std::string gold;
};

struct Dataset {
    TaskId task;
    std::vector<TaskInstance> instances;

    std::vector<std::string> user_ids() const;  // distinct, sorted
    const TaskInstance* find(const std::string& instance_id) const;
};

/// Computes flat_text from fields: canonical task fields in order, then any
/// remaining fields sorted by name, values joined with single spaces.
std::string flatten_profile_entry(const TaskKind& task, const std::map<std::string, std::string>& fields);

/// Does the trimmed answer satisfy the task's answer-format rule? Label
/// membership is case-insensitive; LaMP-3 requires a bare integer 1..5.
bool answer_matches_format(const TaskKind& task, const std::string& answer);

/// Loads a line-delimited JSON dataset. Throws ParseError naming the line on
/// malformed input, ValidationError naming the instance on contract breaks.
Dataset load_dataset(const std::string& path, TaskId task);

/// Parses dataset content from a string (same contract as load_dataset).
Dataset parse_dataset(const std::string& content, TaskId task, const std::string& origin = "<string>");

std::string serialize_dataset(const Dataset& dataset);

/// Keeps only the instances of `count` users drawn uniformly without
/// replacement. Users are keyed on sorted user ids, so the draw depends only
/// on (user set, seed); instance order is preserved.
Dataset sample_users(const Dataset& dataset, std::size_t count, std::uint64_t seed);

}  // namespace r2p
