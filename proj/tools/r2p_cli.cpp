// Command-line harness for personalization experiments: single runs,
// module ablations, candidate-count sweeps, and report emission.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "r2p/harness.hpp"
#include "r2p/util.hpp"

namespace fs = std::filesystem;
using namespace r2p;

namespace {

struct CliOptions {
    std::string config_file;
    std::string task = "LaMP-3";
    std::string strategy = "r2p";
    std::string context = "bm25";
    std::size_t k = 1;
    std::size_t n = 2;
    std::string dataset;
    std::string backend_url;
    std::string mock_script;
    std::string model = "mock-model";
    bool reasoning = true;
    double temperature = -1.0;  // <0 = model default
    std::size_t users = 0;
    std::size_t reps = 1;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    int max_tokens = 2048;
    std::string templates_dir;
    std::string out_dir = "runs";
    bool classification_vote = false;
    bool srm_drop_hrt = false;
    std::size_t max_interventions = 2;
    bool f1_full_labelset = false;
    bool no_seeds = false;
};

void add_common_options(CLI::App* cmd, CliOptions& opt) {
    cmd->add_option("--config", opt.config_file, "JSON config file; explicit flags override it");
    cmd->add_option("--task", opt.task, "Task id, e.g. LaMP-1, LaMP-2N, LaMP-3");
    cmd->add_option("--strategy", opt.strategy, "rag | pag | self-verify | r2p");
    cmd->add_option("--context", opt.context, "Context selection: none | random | bm25");
    cmd->add_option("--k", opt.k, "Number of context entries per prompt");
    cmd->add_option("--n", opt.n, "Self-referencing candidate count");
    cmd->add_option("--dataset", opt.dataset, "Line-delimited JSON dataset path");
    cmd->add_option("--backend-url", opt.backend_url, "OpenAI-compatible endpoint base url");
    cmd->add_option("--mock-script", opt.mock_script, "Scripted mock backend (JSON)");
    cmd->add_option("--model", opt.model, "Model name sent to the endpoint");
    cmd->add_flag("--reasoning,!--no-reasoning", opt.reasoning,
                  "Model emits a reasoning trace (sets the default temperature)");
    cmd->add_option("--temperature", opt.temperature, "Sampling temperature override");
    cmd->add_option("--users", opt.users, "Sample this many users (0 = all)");
    cmd->add_option("--reps", opt.reps, "Repetitions to average over");
    cmd->add_option("--seed", opt.seed, "Experiment seed");
    cmd->add_option("--workers", opt.workers, "Concurrent pipeline workers");
    cmd->add_option("--max-tokens", opt.max_tokens, "max_tokens per generation request");
    cmd->add_option("--templates", opt.templates_dir, "Prompt template directory (default: built-in)");
    cmd->add_option("--out", opt.out_dir, "Output directory for run logs and results");
    cmd->add_flag("--classification-vote", opt.classification_vote,
                  "Majority-vote candidates on classification tasks");
    cmd->add_flag("--srm-drop-hrt", opt.srm_drop_hrt,
                  "Drop the reasoning template from the synthesis call");
    cmd->add_option("--max-interventions", opt.max_interventions,
                    "Intervention budget per generation");
    cmd->add_flag("--f1-full-labelset", opt.f1_full_labelset,
                  "Average macro-F1 over the full label set instead of present labels");
    cmd->add_flag("--no-seeds", opt.no_seeds, "Do not send per-request seeds");
}

ExperimentConfig build_config(const CLI::App* cmd, const CliOptions& opt) {
    ExperimentConfig config;
    if (!opt.config_file.empty()) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(util::read_file(opt.config_file));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
        }
        config = config_from_json(j);
    }

    auto seen = [&](const std::string& flag) { return cmd->count(flag) > 0; };
    bool fresh = opt.config_file.empty();
    if (fresh || seen("--task")) config.task = TaskKind::parse(opt.task).id;
    if (fresh || seen("--strategy")) config.strategy = parse_strategy(opt.strategy);
    if (fresh || seen("--context")) config.context = parse_context_strategy(opt.context);
    if (fresh || seen("--k")) config.k = opt.k;
    if (fresh || seen("--n")) config.n = opt.n;
    if (fresh || seen("--dataset")) config.dataset_path = opt.dataset;
    if (fresh || seen("--backend-url")) config.backend_url = opt.backend_url;
    if (fresh || seen("--mock-script")) config.mock_script = opt.mock_script;
    if (fresh || seen("--model") || seen("--reasoning") || seen("--no-reasoning") ||
        seen("--temperature")) {
        std::string name = (fresh || seen("--model")) ? opt.model : config.model.name;
        bool reasoning = (fresh || seen("--reasoning") || seen("--no-reasoning"))
                             ? opt.reasoning
                             : config.model.is_reasoning;
        std::optional<double> temperature;
        if (seen("--temperature") && opt.temperature >= 0.0) temperature = opt.temperature;
        else if (!fresh && !seen("--reasoning") && !seen("--no-reasoning"))
            temperature = config.model.default_temperature;
        config.model = ModelProfile::make(name, reasoning, temperature);
    }
    if (fresh || seen("--users")) config.users = opt.users;
    if (fresh || seen("--reps")) config.reps = opt.reps;
    if (fresh || seen("--seed")) config.seed = opt.seed;
    if (fresh || seen("--workers")) config.workers = opt.workers;
    if (fresh || seen("--max-tokens")) config.max_tokens = opt.max_tokens;
    if (fresh || seen("--templates")) config.templates_dir = opt.templates_dir;
    if (fresh || seen("--out")) config.out_dir = opt.out_dir;
    if (fresh || seen("--classification-vote")) config.classification_vote = opt.classification_vote;
    if (fresh || seen("--srm-drop-hrt")) config.srm_keep_hrt = !opt.srm_drop_hrt;
    if (fresh || seen("--max-interventions")) config.max_interventions = opt.max_interventions;
    if (fresh || seen("--f1-full-labelset")) config.f1_skip_absent = !opt.f1_full_labelset;
    if (fresh || seen("--no-seeds")) config.send_seeds = !opt.no_seeds;
    return config;
}

int outcome_exit_code(const std::vector<ExperimentOutcome>& outcomes) {
    std::size_t failed = 0, completed = 0;
    for (const auto& o : outcomes) {
        failed += o.failed;
        completed += o.executed + o.skipped;
    }
    if (failed == 0) return 0;
    return completed > 0 ? 2 : 1;  // partial vs. total failure
}

void print_outcome(const ExperimentOutcome& outcome) {
    std::cout << "log: " << outcome.log_path << " (executed " << outcome.executed << ", resumed "
              << outcome.skipped << ", failed " << outcome.failed << ")\n";
    for (const auto& err : outcome.errors) std::cerr << "  failed: " << err << '\n';
}

std::vector<ResultRow> collect_rows(const std::vector<ExperimentOutcome>& outcomes) {
    std::vector<ResultRow> rows;
    for (const auto& o : outcomes) {
        if (o.row) rows.push_back(*o.row);
    }
    return rows;
}

int finish(const std::vector<ExperimentOutcome>& outcomes, const std::string& csv_path) {
    for (const auto& o : outcomes) print_outcome(o);
    auto rows = collect_rows(outcomes);
    if (!rows.empty()) {
        std::cout << emit_report(rows, ReportFormat::Markdown);
        if (!csv_path.empty() && rows.size() == outcomes.size()) {
            util::write_file(csv_path, emit_report(rows, ReportFormat::Csv));
            std::cout << "wrote " << csv_path << '\n';
        }
    }
    return outcome_exit_code(outcomes);
}

std::vector<std::size_t> parse_n_values(const std::string& csv) {
    std::vector<std::size_t> values;
    std::stringstream ss(csv);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = util::trim(part);
        if (!part.empty()) values.push_back(static_cast<std::size_t>(std::stoul(part)));
    }
    return values;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Personalization experiment harness for reasoning models"};
    app.require_subcommand(1);

    CliOptions run_opt, ablate_opt, sweep_opt;
    auto* run_cmd = app.add_subcommand("run", "Run one experiment configuration");
    add_common_options(run_cmd, run_opt);

    auto* ablate_cmd = app.add_subcommand("ablate", "Run full r2p plus -HRT, -RPI, -SRM variants");
    add_common_options(ablate_cmd, ablate_opt);

    auto* sweep_cmd = app.add_subcommand("sweep-n", "Run r2p across candidate counts");
    add_common_options(sweep_cmd, sweep_opt);
    std::string n_values_csv = "0,1,2,3";
    sweep_cmd->add_option("--n-values", n_values_csv, "Comma-separated candidate counts");

    auto* report_cmd = app.add_subcommand("report", "Render result rows as CSV or markdown");
    std::vector<std::string> results_paths;
    std::string report_format = "csv";
    std::string report_out;
    report_cmd->add_option("--results", results_paths, "results.jsonl files")->required();
    report_cmd->add_option("--format", report_format, "csv | markdown");
    report_cmd->add_option("--out", report_out, "Output file (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            ExperimentConfig config = build_config(run_cmd, run_opt);
            auto backend = make_backend(config);
            ExperimentOutcome outcome = run_experiment(config, *backend);
            return finish({outcome}, "");
        }
        if (ablate_cmd->parsed()) {
            ExperimentConfig config = build_config(ablate_cmd, ablate_opt);
            config.strategy = Strategy::R2p;
            auto outcomes = run_ablation(config);
            return finish(outcomes, (fs::path(config.out_dir) / "ablation.csv").string());
        }
        if (sweep_cmd->parsed()) {
            ExperimentConfig config = build_config(sweep_cmd, sweep_opt);
            auto outcomes = run_n_sweep(config, parse_n_values(n_values_csv));
            return finish(outcomes, (fs::path(config.out_dir) / "n_sweep.csv").string());
        }
        if (report_cmd->parsed()) {
            std::vector<ResultRow> rows;
            for (const auto& path : results_paths) {
                auto loaded = load_result_rows(path);
                rows.insert(rows.end(), loaded.begin(), loaded.end());
            }
            ReportFormat format = report_format == "markdown" ? ReportFormat::Markdown
                                                              : ReportFormat::Csv;
            std::string rendered = emit_report(rows, format);
            if (report_out.empty()) {
                std::cout << rendered;
            } else {
                util::write_file(report_out, rendered);
                std::cout << "wrote " << report_out << '\n';
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
