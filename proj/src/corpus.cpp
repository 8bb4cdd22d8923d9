#include "r2p/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "r2p/util.hpp"

namespace r2p {

using nlohmann::json;

namespace {

std::vector<TaskKind> make_tasks() {
    const std::vector<std::string> news_categories = {
        "business", "crime", "culture & arts", "education", "entertainment",
        "food & drink", "healthy living", "parents", "politics", "religion",
        "science & technology", "sports", "style & beauty", "travel", "women"};
    const std::vector<std::string> movie_tags = {
        "action", "based on a book", "classic", "comedy", "dark comedy",
        "dystopia", "fantasy", "psychology", "romance", "sci-fi",
        "social commentary", "thought-provoking", "true story", "twist ending", "violence"};

    std::vector<TaskKind> tasks;
    tasks.push_back({TaskId::LaMP_1, "LaMP-1", TaskCategory::Classification,
                     {"[1]", "[2]"}, AnswerFormat::BracketedChoice,
                     {"accuracy", "macro_f1"}, {"title", "abstract"}});
    tasks.push_back({TaskId::LaMP_2N, "LaMP-2N", TaskCategory::Classification,
                     news_categories, AnswerFormat::MemberOfLabelSet,
                     {"accuracy", "macro_f1"}, {"title", "text", "category"}});
    tasks.push_back({TaskId::LaMP_2M, "LaMP-2M", TaskCategory::Classification,
                     movie_tags, AnswerFormat::MemberOfLabelSet,
                     {"accuracy", "macro_f1"}, {"description", "tag"}});
    tasks.push_back({TaskId::LaMP_3, "LaMP-3", TaskCategory::Regression,
                     {}, AnswerFormat::IntegerInRange,
                     {"mae", "rmse"}, {"text", "score"}});
    tasks.push_back({TaskId::LaMP_4, "LaMP-4", TaskCategory::Generation,
                     {}, AnswerFormat::FreeTextNonempty,
                     {"rouge_1", "rouge_l"}, {"title", "text"}});
    tasks.push_back({TaskId::LaMP_5, "LaMP-5", TaskCategory::Generation,
                     {}, AnswerFormat::FreeTextNonempty,
                     {"rouge_1", "rouge_l"}, {"title", "abstract"}});
    tasks.push_back({TaskId::LaMP_7, "LaMP-7", TaskCategory::Generation,
                     {}, AnswerFormat::FreeTextNonempty,
                     {"rouge_1", "rouge_l"}, {"text"}});
    return tasks;
}

std::string canonical_task_key(const std::string& name) {
    std::string key;
    for (char c : util::to_lower(name)) {
        if (c != '-' && c != '_' && c != ' ') key += c;
    }
    return key;
}

std::string json_field_to_string(const json& v, const std::string& context) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number_float()) return json(v).dump();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    throw ValidationError("non-scalar profile field value in " + context);
}

}  // namespace

const std::vector<TaskKind>& TaskKind::all() {
    static const std::vector<TaskKind> tasks = make_tasks();
    return tasks;
}

const TaskKind& TaskKind::get(TaskId id) {
    for (const auto& t : all()) {
        if (t.id == id) return t;
    }
    throw ConfigError("unknown task id");
}

const TaskKind& TaskKind::parse(const std::string& name) {
    std::string key = canonical_task_key(name);
    for (const auto& t : all()) {
        if (canonical_task_key(t.name) == key) return t;
    }
    throw ConfigError("unknown task: " + name);
}

bool answer_matches_format(const TaskKind& task, const std::string& answer) {
    switch (task.answer_format) {
        case AnswerFormat::BracketedChoice:
        case AnswerFormat::MemberOfLabelSet: {
            std::string norm = util::norm_answer(answer);
            for (const auto& label : task.label_set) {
                if (util::norm_answer(label) == norm) return true;
            }
            return false;
        }
        case AnswerFormat::IntegerInRange: {
            std::string t = util::trim(answer);
            if (t.empty() || t.size() > 2) return false;
            for (char c : t) {
                if (!std::isdigit(static_cast<unsigned char>(c))) return false;
            }
            int v = std::stoi(t);
            return v >= 1 && v <= 5;
        }
        case AnswerFormat::FreeTextNonempty:
            return !util::trim(answer).empty();
    }
    return false;
}

std::string flatten_profile_entry(const TaskKind& task, const std::map<std::string, std::string>& fields) {
    std::string out;
    auto append = [&out](const std::string& value) {
        if (value.empty()) return;
        if (!out.empty()) out += ' ';
        out += value;
    };
    std::set<std::string> used;
    for (const auto& name : task.profile_fields) {
        auto it = fields.find(name);
        if (it != fields.end()) {
            append(it->second);
            used.insert(name);
        }
    }
    for (const auto& [name, value] : fields) {  // extras in sorted name order
        if (!used.count(name)) append(value);
    }
    return out;
}

std::vector<std::string> Dataset::user_ids() const {
    std::set<std::string> ids;
    for (const auto& inst : instances) ids.insert(inst.user_id);
    return {ids.begin(), ids.end()};
}

const TaskInstance* Dataset::find(const std::string& instance_id) const {
    for (const auto& inst : instances) {
        if (inst.instance_id == instance_id) return &inst;
    }
    return nullptr;
}

Dataset parse_dataset(const std::string& content, TaskId task_id, const std::string& origin) {
    const TaskKind& task = TaskKind::get(task_id);
    Dataset dataset{task_id, {}};
    std::unordered_set<std::string> seen_ids;

    std::istringstream in(content);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (util::trim(line).empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(origin + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        auto require = [&](const char* field) -> const json& {
            if (!rec.contains(field)) {
                throw ParseError(origin + ":" + std::to_string(line_no) + ": missing field \"" +
                                 field + "\"");
            }
            return rec.at(field);
        };

        TaskInstance inst;
        inst.task = task_id;
        inst.instance_id = json_field_to_string(require("id"), "line " + std::to_string(line_no));
        inst.user_id = json_field_to_string(require("user_id"), "instance " + inst.instance_id);
        inst.input_text = require("input").get<std::string>();
        inst.gold = json_field_to_string(require("output"), "instance " + inst.instance_id);

        if (!seen_ids.insert(inst.instance_id).second) {
            throw ValidationError("duplicate instance_id: " + inst.instance_id);
        }

        if (rec.contains("profile")) {
            const json& profile = rec.at("profile");
            if (!profile.is_array()) {
                throw ValidationError("profile is not an array in instance " + inst.instance_id);
            }
            std::unordered_set<std::string> entry_ids;
            for (const json& entry : profile) {
                ProfileEntry pe;
                if (!entry.contains("id")) {
                    throw ValidationError("profile entry without id in instance " + inst.instance_id);
                }
                pe.entry_id = json_field_to_string(entry.at("id"), "instance " + inst.instance_id);
                if (!entry_ids.insert(pe.entry_id).second) {
                    throw ValidationError("duplicate profile entry id " + pe.entry_id +
                                          " in instance " + inst.instance_id);
                }
                for (const auto& [name, value] : entry.items()) {
                    if (name == "id") continue;
                    pe.fields[name] = json_field_to_string(value, "instance " + inst.instance_id);
                }
                pe.flat_text = flatten_profile_entry(task, pe.fields);
                inst.profile.push_back(std::move(pe));
            }
        }

        if (!answer_matches_format(task, inst.gold)) {
            throw ValidationError("gold \"" + inst.gold + "\" invalid for " + task.name +
                                  " in instance " + inst.instance_id);
        }
        dataset.instances.push_back(std::move(inst));
    }
    return dataset;
}

Dataset load_dataset(const std::string& path, TaskId task) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("dataset file not found: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_dataset(ss.str(), task, path);
}

std::string serialize_dataset(const Dataset& dataset) {
    std::string out;
    for (const auto& inst : dataset.instances) {
        json rec;
        rec["id"] = inst.instance_id;
        rec["user_id"] = inst.user_id;
        rec["input"] = inst.input_text;
        rec["output"] = inst.gold;
        json profile = json::array();
        for (const auto& pe : inst.profile) {
            json entry;
            entry["id"] = pe.entry_id;
            for (const auto& [name, value] : pe.fields) entry[name] = value;
            profile.push_back(entry);
        }
        rec["profile"] = profile;
        out += rec.dump();
        out += '\n';
    }
    return out;
}

Dataset sample_users(const Dataset& dataset, std::size_t count, std::uint64_t seed) {
    std::vector<std::string> users = dataset.user_ids();
    if (count > users.size()) {
        throw ValidationError("requested " + std::to_string(count) + " users but dataset has " +
                              std::to_string(users.size()));
    }
    std::vector<std::size_t> picks = util::sample_indices(users.size(), count, seed);
    std::unordered_set<std::string> selected;
    for (std::size_t i : picks) selected.insert(users[i]);

    Dataset out{dataset.task, {}};
    for (const auto& inst : dataset.instances) {
        if (selected.count(inst.user_id)) out.instances.push_back(inst);
    }
    return out;
}

}  // namespace r2p
