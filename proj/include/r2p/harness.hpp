#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "r2p/metrics.hpp"
#include "r2p/mock_backend.hpp"
#include "r2p/pipeline.hpp"

namespace r2p {

struct ExperimentConfig {
    TaskId task = TaskId::LaMP_3;
    Strategy strategy = Strategy::R2p;
    ContextStrategy context = ContextStrategy::Bm25;
    std::size_t k = 1;
    std::size_t n = 2;
    bool use_hrt = true;
    bool use_rpi = true;
    bool use_srm = true;
    bool classification_vote = false;
    bool srm_keep_hrt = true;
    std::size_t max_interventions = 2;
    std::size_t ngram_size = 3;
    ModelProfile model = ModelProfile::make("mock-model", true);
    std::string backend_url;   // live endpoint; empty when a mock script is used
    std::string mock_script;   // mock script path; wins over backend_url
    std::string dataset_path;
    std::string templates_dir;  // empty = built-in templates
    std::size_t users = 0;      // 0 = keep every user
    std::uint64_t seed = 0;
    std::size_t reps = 1;
    std::size_t workers = 1;
    int max_tokens = 2048;
    bool send_seeds = true;
    bool f1_skip_absent = true;
    std::string out_dir;

    void validate() const;

    /// Hash of the semantic run parameters. Worker count, paths and endpoint
    /// location do not change what a run computes, so they stay out.
    std::string config_hash() const;

    /// Pipeline view for one (instance, rep). The per-instance seed mixes the
    /// experiment seed with the repetition index and the instance id.
    PipelineConfig pipeline_config(std::size_t rep, const std::string& instance_id) const;
};

/// Parses the JSON config-file form (same keys as the CLI flags).
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);

/// One results-table row (EvalResult plus the config columns reports need).
struct ResultRow {
    std::string task;
    std::string strategy;
    std::size_t k = 0;
    std::size_t n = 0;
    bool use_hrt = false;
    bool use_rpi = false;
    bool use_srm = false;
    std::map<std::string, double> metrics;
    double mean_tokens = 0.0;
    std::size_t reps = 1;
    std::size_t n_instances = 0;
    std::string config_hash;
};

nlohmann::json result_row_to_json(const ResultRow& row);
ResultRow result_row_from_json(const nlohmann::json& j);

nlohmann::json run_record_to_json(const RunRecord& record);

struct ExperimentOutcome {
    std::optional<ResultRow> row;  // absent when instances failed
    std::size_t executed = 0;      // run in this invocation
    std::size_t skipped = 0;       // already present in the run log
    std::size_t failed = 0;
    std::string log_path;
    std::vector<std::string> errors;
};

/// Runs all instances x reps with bounded concurrency, appending one JSON
/// line per RunRecord to the config-hash-keyed run log. Items whose records
/// already exist are skipped, so an interrupted run resumes where it stopped.
ExperimentOutcome run_experiment(const ExperimentConfig& config, Backend& backend);

using BackendFactory = std::function<std::unique_ptr<Backend>(const ExperimentConfig&)>;

/// HttpBackend from backend_url, or the scripted mock when mock_script is
/// set. The API key comes from the R2P_API_KEY environment variable.
std::unique_ptr<Backend> make_backend(const ExperimentConfig& config);

/// Full configuration, then one variant per disabled module (-HRT, -RPI,
/// -SRM). Requires the r2p strategy.
std::vector<ExperimentOutcome> run_ablation(const ExperimentConfig& base,
                                            const BackendFactory& factory = make_backend);

/// One run per candidate count; the paper-style default sweep is {0,1,2,3}.
std::vector<ExperimentOutcome> run_n_sweep(const ExperimentConfig& base,
                                           const std::vector<std::size_t>& n_values,
                                           const BackendFactory& factory = make_backend);

enum class ReportFormat { Csv, Markdown };

/// Stable column order: task, strategy, k, n, flags, metric columns,
/// mean_tokens, reps. Markdown bolds the best value per metric column,
/// direction-aware (lower wins for mae/rmse).
std::string emit_report(const std::vector<ResultRow>& rows, ReportFormat format);

std::vector<ResultRow> load_result_rows(const std::string& path);
void append_result_row(const std::string& path, const ResultRow& row);

}  // namespace r2p
