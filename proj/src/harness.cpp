#include "r2p/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "r2p/util.hpp"

namespace r2p {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string>& metric_column_order() {
    static const std::vector<std::string> order = {"accuracy", "macro_f1", "mae",
                                                   "rmse",     "rouge_1",  "rouge_l"};
    return order;
}

bool lower_is_better(const std::string& metric) { return metric == "mae" || metric == "rmse"; }

std::string format_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

json selection_to_json(const ContextSelection& sel) {
    json chosen = json::array();
    for (const auto& [id, score] : sel.chosen) {
        json e;
        e["id"] = id;
        if (score) e["score"] = *score;
        chosen.push_back(e);
    }
    return {{"strategy", context_strategy_name(sel.strategy)}, {"k", sel.k}, {"chosen", chosen}};
}

struct WorkItem {
    const TaskInstance* instance;
    std::size_t rep;
};

}  // namespace

void ExperimentConfig::validate() const {
    if (reps == 0) throw ConfigError("reps must be >= 1");
    if (workers == 0) throw ConfigError("workers must be >= 1");
    if (dataset_path.empty()) throw ConfigError("dataset path is required");
    if (out_dir.empty()) throw ConfigError("output directory is required");
    if (backend_url.empty() && mock_script.empty()) {
        throw ConfigError("either a backend url or a mock script is required");
    }
}

std::string ExperimentConfig::config_hash() const {
    json j;
    j["task"] = TaskKind::get(task).name;
    j["strategy"] = strategy_name(strategy);
    j["context"] = context_strategy_name(context);
    j["k"] = k;
    j["n"] = n;
    j["use_hrt"] = use_hrt;
    j["use_rpi"] = use_rpi;
    j["use_srm"] = use_srm;
    j["classification_vote"] = classification_vote;
    j["srm_keep_hrt"] = srm_keep_hrt;
    j["max_interventions"] = max_interventions;
    j["ngram_size"] = ngram_size;
    j["model"] = {{"name", model.name},
                  {"is_reasoning", model.is_reasoning},
                  {"temperature", model.default_temperature}};
    j["users"] = users;
    j["seed"] = seed;
    j["reps"] = reps;
    j["max_tokens"] = max_tokens;
    j["send_seeds"] = send_seeds;
    j["f1_skip_absent"] = f1_skip_absent;
    return util::to_hex(util::fnv1a64(j.dump()));
}

PipelineConfig ExperimentConfig::pipeline_config(std::size_t rep, const std::string& instance_id) const {
    PipelineConfig pc = PipelineConfig::for_strategy(strategy);
    if (strategy == Strategy::R2p) {
        pc.use_hrt = use_hrt;
        pc.use_rpi = use_rpi;
        pc.use_srm = use_srm;
    }
    pc.context = k == 0 ? ContextStrategy::None : context;
    pc.k = k;
    pc.n = n;
    pc.max_interventions = max_interventions;
    pc.classification_vote = classification_vote;
    pc.srm_keep_hrt = srm_keep_hrt;
    pc.ngram_size = ngram_size;
    pc.max_tokens = max_tokens;
    pc.send_seeds = send_seeds;
    pc.seed = derive_seed(derive_seed(seed, rep), util::fnv1a64(instance_id));
    return pc;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    if (j.contains("task")) c.task = TaskKind::parse(j["task"].get<std::string>()).id;
    if (j.contains("strategy")) c.strategy = parse_strategy(j["strategy"].get<std::string>());
    if (j.contains("context")) c.context = parse_context_strategy(j["context"].get<std::string>());
    if (j.contains("k")) c.k = j["k"].get<std::size_t>();
    if (j.contains("n")) c.n = j["n"].get<std::size_t>();
    if (j.contains("use-hrt")) c.use_hrt = j["use-hrt"].get<bool>();
    if (j.contains("use-rpi")) c.use_rpi = j["use-rpi"].get<bool>();
    if (j.contains("use-srm")) c.use_srm = j["use-srm"].get<bool>();
    if (j.contains("classification-vote")) c.classification_vote = j["classification-vote"].get<bool>();
    if (j.contains("srm-keep-hrt")) c.srm_keep_hrt = j["srm-keep-hrt"].get<bool>();
    if (j.contains("max-interventions")) c.max_interventions = j["max-interventions"].get<std::size_t>();
    if (j.contains("ngram-size")) c.ngram_size = j["ngram-size"].get<std::size_t>();
    bool reasoning = j.value("reasoning", true);
    std::optional<double> temperature;
    if (j.contains("temperature")) temperature = j["temperature"].get<double>();
    c.model = ModelProfile::make(j.value("model", std::string("mock-model")), reasoning, temperature);
    if (j.contains("backend-url")) c.backend_url = j["backend-url"].get<std::string>();
    if (j.contains("mock-script")) c.mock_script = j["mock-script"].get<std::string>();
    if (j.contains("dataset")) c.dataset_path = j["dataset"].get<std::string>();
    if (j.contains("templates")) c.templates_dir = j["templates"].get<std::string>();
    if (j.contains("users")) c.users = j["users"].get<std::size_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("reps")) c.reps = j["reps"].get<std::size_t>();
    if (j.contains("workers")) c.workers = j["workers"].get<std::size_t>();
    if (j.contains("max-tokens")) c.max_tokens = j["max-tokens"].get<int>();
    if (j.contains("send-seeds")) c.send_seeds = j["send-seeds"].get<bool>();
    if (j.contains("f1-skip-absent")) c.f1_skip_absent = j["f1-skip-absent"].get<bool>();
    if (j.contains("out")) c.out_dir = j["out"].get<std::string>();
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["task"] = TaskKind::get(c.task).name;
    j["strategy"] = strategy_name(c.strategy);
    j["context"] = context_strategy_name(c.context);
    j["k"] = c.k;
    j["n"] = c.n;
    j["use-hrt"] = c.use_hrt;
    j["use-rpi"] = c.use_rpi;
    j["use-srm"] = c.use_srm;
    j["classification-vote"] = c.classification_vote;
    j["srm-keep-hrt"] = c.srm_keep_hrt;
    j["max-interventions"] = c.max_interventions;
    j["ngram-size"] = c.ngram_size;
    j["model"] = c.model.name;
    j["reasoning"] = c.model.is_reasoning;
    j["temperature"] = c.model.default_temperature;
    j["backend-url"] = c.backend_url;
    j["mock-script"] = c.mock_script;
    j["dataset"] = c.dataset_path;
    j["templates"] = c.templates_dir;
    j["users"] = c.users;
    j["seed"] = c.seed;
    j["reps"] = c.reps;
    j["workers"] = c.workers;
    j["max-tokens"] = c.max_tokens;
    j["send-seeds"] = c.send_seeds;
    j["f1-skip-absent"] = c.f1_skip_absent;
    j["out"] = c.out_dir;
    return j;
}

json run_record_to_json(const RunRecord& record) {
    json calls = json::array();
    for (const auto& call : record.calls) {
        calls.push_back({{"request", request_to_json(call.request)},
                         {"response",
                          {{"text", call.response.text},
                           {"completion_tokens", call.response.completion_tokens},
                           {"backend_reported", call.response.backend_reported}}}});
    }
    json j;
    j["config_hash"] = record.config_hash;
    j["instance_id"] = record.instance_id;
    j["rep"] = record.rep;
    j["selection"] = selection_to_json(record.selection);
    j["calls"] = calls;
    j["interventions"] = record.interventions;
    j["interventions_per_candidate"] = record.interventions_per_candidate;
    j["candidates"] = record.candidates;
    j["final_answer"] = record.final_answer;
    j["total_completion_tokens"] = record.total_completion_tokens;
    j["flags"] = record.flags;
    return j;
}

json result_row_to_json(const ResultRow& row) {
    json j;
    j["task"] = row.task;
    j["strategy"] = row.strategy;
    j["k"] = row.k;
    j["n"] = row.n;
    j["use_hrt"] = row.use_hrt;
    j["use_rpi"] = row.use_rpi;
    j["use_srm"] = row.use_srm;
    j["metrics"] = row.metrics;
    j["mean_tokens"] = row.mean_tokens;
    j["reps"] = row.reps;
    j["n_instances"] = row.n_instances;
    j["config_hash"] = row.config_hash;
    return j;
}

ResultRow result_row_from_json(const json& j) {
    ResultRow row;
    row.task = j.at("task").get<std::string>();
    row.strategy = j.at("strategy").get<std::string>();
    row.k = j.at("k").get<std::size_t>();
    row.n = j.at("n").get<std::size_t>();
    row.use_hrt = j.at("use_hrt").get<bool>();
    row.use_rpi = j.at("use_rpi").get<bool>();
    row.use_srm = j.at("use_srm").get<bool>();
    for (const auto& [name, value] : j.at("metrics").items()) {
        row.metrics[name] = value.get<double>();
    }
    row.mean_tokens = j.at("mean_tokens").get<double>();
    row.reps = j.at("reps").get<std::size_t>();
    row.n_instances = j.at("n_instances").get<std::size_t>();
    row.config_hash = j.at("config_hash").get<std::string>();
    return row;
}

std::unique_ptr<Backend> make_backend(const ExperimentConfig& config) {
    if (!config.mock_script.empty()) {
        return std::make_unique<MockBackend>(MockBackend::from_file(config.mock_script));
    }
    HttpBackendOptions options;
    options.base_url = config.backend_url;
    if (const char* key = std::getenv("R2P_API_KEY")) options.api_key = key;
    return std::make_unique<HttpBackend>(std::move(options));
}

ExperimentOutcome run_experiment(const ExperimentConfig& config, Backend& backend) {
    config.validate();
    const std::string hash = config.config_hash();

    Dataset dataset = load_dataset(config.dataset_path, config.task);
    if (config.users > 0) dataset = sample_users(dataset, config.users, config.seed);
    if (dataset.instances.empty()) throw ValidationError("dataset has no instances");

    const TemplateLibrary templates = config.templates_dir.empty()
                                          ? TemplateLibrary::builtin()
                                          : TemplateLibrary::load_dir(config.templates_dir);

    fs::create_directories(config.out_dir);
    ExperimentOutcome outcome;
    outcome.log_path = (fs::path(config.out_dir) / ("runlog_" + hash + ".jsonl")).string();

    // Resume: collect records already present for this config hash.
    std::set<std::pair<std::string, std::size_t>> done;
    std::vector<ScoredRecord> scored;
    if (fs::exists(outcome.log_path)) {
        std::ifstream in(outcome.log_path);
        std::string line;
        while (std::getline(in, line)) {
            if (util::trim(line).empty()) continue;
            json j = json::parse(line);
            if (j.value("config_hash", "") != hash) continue;
            ScoredRecord rec;
            rec.instance_id = j.at("instance_id").get<std::string>();
            rec.rep = j.at("rep").get<std::size_t>();
            rec.final_answer = j.at("final_answer").get<std::string>();
            rec.total_completion_tokens = j.at("total_completion_tokens").get<std::size_t>();
            if (done.emplace(rec.instance_id, rec.rep).second) scored.push_back(std::move(rec));
        }
    }
    outcome.skipped = done.size();

    std::vector<WorkItem> pending;
    for (std::size_t rep = 0; rep < config.reps; ++rep) {
        for (const auto& inst : dataset.instances) {
            if (!done.count({inst.instance_id, rep})) pending.push_back({&inst, rep});
        }
    }

    std::ofstream log(outcome.log_path, std::ios::app | std::ios::binary);
    if (!log) throw Error("cannot open run log: " + outcome.log_path);

    std::mutex sink_mutex;  // guards log writes, scored, and errors
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= pending.size()) break;
            const WorkItem& item = pending[i];
            try {
                PipelineConfig pc = config.pipeline_config(item.rep, item.instance->instance_id);
                RunRecord record = run_instance(pc, *item.instance, backend, config.model, templates);
                record.rep = item.rep;
                record.config_hash = hash;

                ScoredRecord rec{record.instance_id, record.rep, record.final_answer,
                                 record.total_completion_tokens};
                std::string line = run_record_to_json(record).dump();
                std::lock_guard<std::mutex> lock(sink_mutex);
                log << line << '\n';
                log.flush();
                scored.push_back(std::move(rec));
                ++outcome.executed;
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(sink_mutex);
                ++outcome.failed;
                outcome.errors.push_back(item.instance->instance_id + " rep " +
                                         std::to_string(item.rep) + ": " + e.what());
            }
        }
    };
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < std::min(config.workers, pending.size()); ++w) {
        threads.emplace_back(worker);
    }
    for (auto& t : threads) t.join();

    if (outcome.failed == 0) {
        std::map<std::string, std::string> golds;
        for (const auto& inst : dataset.instances) golds[inst.instance_id] = inst.gold;
        EvalResult eval = aggregate(config.task, scored, golds, config.reps, config.f1_skip_absent);

        ResultRow row;
        row.task = TaskKind::get(config.task).name;
        row.strategy = strategy_name(config.strategy);
        row.k = config.k;
        row.n = config.n;
        row.use_hrt = config.strategy == Strategy::R2p && config.use_hrt;
        row.use_rpi = config.strategy == Strategy::R2p && config.use_rpi;
        row.use_srm = config.strategy == Strategy::R2p && config.use_srm;
        row.metrics = eval.per_metric;
        row.mean_tokens = eval.mean_completion_tokens;
        row.reps = eval.reps;
        row.n_instances = eval.n_instances;
        row.config_hash = hash;
        append_result_row((fs::path(config.out_dir) / "results.jsonl").string(), row);
        outcome.row = row;
    }
    return outcome;
}

std::vector<ExperimentOutcome> run_ablation(const ExperimentConfig& base, const BackendFactory& factory) {
    if (base.strategy != Strategy::R2p) throw ConfigError("ablation requires the r2p strategy");
    std::vector<ExperimentOutcome> outcomes;
    struct Variant {
        bool hrt, rpi, srm;
    };
    const Variant variants[] = {{true, true, true}, {false, true, true},
                                {true, false, true}, {true, true, false}};
    for (const auto& v : variants) {
        ExperimentConfig config = base;
        config.use_hrt = v.hrt;
        config.use_rpi = v.rpi;
        config.use_srm = v.srm;
        auto backend = factory(config);
        outcomes.push_back(run_experiment(config, *backend));
    }
    return outcomes;
}

std::vector<ExperimentOutcome> run_n_sweep(const ExperimentConfig& base,
                                           const std::vector<std::size_t>& n_values,
                                           const BackendFactory& factory) {
    if (n_values.empty()) throw ConfigError("n sweep requires at least one value");
    std::vector<ExperimentOutcome> outcomes;
    for (std::size_t n : n_values) {
        ExperimentConfig config = base;
        config.n = n;
        auto backend = factory(config);
        outcomes.push_back(run_experiment(config, *backend));
    }
    return outcomes;
}

std::string emit_report(const std::vector<ResultRow>& rows, ReportFormat format) {
    if (rows.empty()) throw ValidationError("report requires at least one result row");

    std::vector<std::string> metric_cols;
    for (const auto& name : metric_column_order()) {
        for (const auto& row : rows) {
            if (row.metrics.count(name)) {
                metric_cols.push_back(name);
                break;
            }
        }
    }

    // Direction-aware best value per metric column.
    std::map<std::string, double> best;
    for (const auto& name : metric_cols) {
        bool first = true;
        for (const auto& row : rows) {
            auto it = row.metrics.find(name);
            if (it == row.metrics.end()) continue;
            if (first || (lower_is_better(name) ? it->second < best[name] : it->second > best[name])) {
                best[name] = it->second;
                first = false;
            }
        }
    }

    std::vector<std::string> header = {"task", "strategy", "k", "n", "use_hrt", "use_rpi", "use_srm"};
    header.insert(header.end(), metric_cols.begin(), metric_cols.end());
    header.push_back("mean_tokens");
    header.push_back("reps");

    auto row_cells = [&](const ResultRow& row, bool bold_best) {
        std::vector<std::string> cells = {row.task,
                                          row.strategy,
                                          std::to_string(row.k),
                                          std::to_string(row.n),
                                          row.use_hrt ? "true" : "false",
                                          row.use_rpi ? "true" : "false",
                                          row.use_srm ? "true" : "false"};
        for (const auto& name : metric_cols) {
            auto it = row.metrics.find(name);
            if (it == row.metrics.end()) {
                cells.push_back("");
                continue;
            }
            std::string v = format_value(it->second);
            if (bold_best && it->second == best[name]) v = "**" + v + "**";
            cells.push_back(v);
        }
        cells.push_back(format_value(row.mean_tokens));
        cells.push_back(std::to_string(row.reps));
        return cells;
    };

    std::ostringstream out;
    if (format == ReportFormat::Csv) {
        for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
        out << '\n';
        for (const auto& row : rows) {
            auto cells = row_cells(row, false);
            for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
            out << '\n';
        }
    } else {
        out << '|';
        for (const auto& h : header) out << ' ' << h << " |";
        out << "\n|";
        for (std::size_t i = 0; i < header.size(); ++i) out << " --- |";
        out << '\n';
        for (const auto& row : rows) {
            auto cells = row_cells(row, true);
            out << '|';
            for (const auto& c : cells) out << ' ' << c << " |";
            out << '\n';
        }
    }
    return out.str();
}

std::vector<ResultRow> load_result_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open results file: " + path);
    std::vector<ResultRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (util::trim(line).empty()) continue;
        rows.push_back(result_row_from_json(json::parse(line)));
    }
    return rows;
}

void append_result_row(const std::string& path, const ResultRow& row) {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw Error("cannot open results file: " + path);
    out << result_row_to_json(row).dump() << '\n';
}

}  // namespace r2p
