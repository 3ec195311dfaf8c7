#pragma once
// Batch evaluation machinery: config and dataset files, the parallel batch
// runner, judgment caching, run manifests, and the ablation matrix.

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hopqa/evaluation.hpp"
#include "hopqa/json_io.hpp"
#include "hopqa/orchestrator.hpp"

namespace hopqa {

// --- files --------------------------------------------------------------

PipelineConfig config_from_json(const Json& doc);
PipelineConfig load_config_file(const std::string& path);
// Matrix entries overlay the base config; unknown keys are rejected.
PipelineConfig apply_config_overlay(PipelineConfig cfg, const Json& overlay);

// JSONL of {id, question, answers:[...]}; every field is required and
// answers must be non-empty.
std::vector<Question> load_dataset(const std::string& path);

// --- judgments ------------------------------------------------------------

// JSONL sidecar keyed by (question id, prediction hash); re-aggregation
// never re-judges a prediction it has seen.
class JudgmentCache {
public:
    explicit JudgmentCache(std::string path);

    std::optional<int> lookup(const std::string& question_id, const std::string& prediction) const;
    void store(const std::string& question_id, const std::string& prediction, int verdict);

private:
    std::string path_;
    std::map<std::pair<std::string, std::string>, int> entries_;
};

// --- manifest -------------------------------------------------------------

struct RunManifest {
    std::string run_id;
    std::string config_path;
    std::string config_sha256;
    std::string dataset_path;
    std::string templates_digest;
    std::string started;
    std::string finished;

    Json to_json() const;
};

std::string new_run_id();
std::string iso8601_utc_now();

// --- runner -------------------------------------------------------------

struct EvalResult {
    std::vector<PipelineTrace> traces;
    std::vector<Judgment> judgments;
    MetricsRow row;
    int judge_calls = 0;  // gateway judgments actually issued (cache misses)
};

// Owns the shared pieces one run needs: gateway (with optional script),
// templates, retriever. Configs passed to eval/ablate must agree with the
// base config on templates_dir and retrieval.
class Runner {
public:
    explicit Runner(const PipelineConfig& base);

    PipelineTrace ask(const Question& q, const PipelineConfig& cfg) const;

    // Solves the whole dataset under `cfg` (parallelism from cfg.parallel),
    // judges with Cover-EM plus the configured judge model, and aggregates.
    // Per-question faults become abstention traces, never aborts.
    EvalResult eval(const std::vector<Question>& dataset, const PipelineConfig& cfg,
                    const std::string& label, JudgmentCache* cache) const;

    // One metrics row per overlay entry, each validated against the module
    // couplings before anything runs.
    std::vector<MetricsRow> ablate(const std::vector<Question>& dataset,
                                   const std::vector<std::pair<std::string, Json>>& overlays,
                                   JudgmentCache* cache,
                                   std::vector<EvalResult>* results = nullptr) const;

    Gateway& gateway() const { return *gateway_; }
    const TemplateSet& templates() const { return templates_; }
    const Retriever& retriever() const { return *retriever_; }

private:
    PipelineConfig base_;
    TemplateSet templates_;
    std::unique_ptr<Gateway> gateway_;
    std::unique_ptr<Retriever> retriever_;
};

// Runs fn(i) for i in [0, count) across `parallel` worker threads.
void parallel_for(size_t count, int parallel, const std::function<void(size_t)>& fn);

// Ablation matrix file: {"baseline": <label>, "configs": [{"label": ..,
// overlay keys ..}, ...]}; returns (baseline label, overlays).
std::pair<std::string, std::vector<std::pair<std::string, Json>>> load_matrix_file(
    const std::string& path);

// Labels double as directory names; anything outside [A-Za-z0-9_.-] is out.
void validate_label(const std::string& label);

}  // namespace hopqa
