#pragma once
// The prompt-backed transformations: each renders its template, invokes the
// gateway, and parses the labeled output grammar into domain types. All
// methods are stateless; per-run state lives in the caller's CallLog.

#include <optional>
#include <string>
#include <vector>

#include "hopqa/core.hpp"
#include "hopqa/gateway.hpp"

namespace hopqa {

struct RetrievalDecision {
    bool needed = true;
    std::string analysis;
};

struct RerankResult {
    std::string reasoning;
    std::vector<int> order;  // duplicate-free local_ids, length min(10, k)
};

struct ConstructResult {
    std::string text;
    bool used_fallback = false;  // model left a placeholder; deterministic path used
};

struct AnswerResult {
    CitedAnswer answer;
    std::string reasoning;
};

struct AnalysisResult {
    std::string text;
    bool decomposition_appropriate = false;  // sentinel detected
};

struct PriorPlan {
    DecompositionPlan plan;
    std::string analysis;
};

struct ImprovedPlan {
    DecompositionPlan plan;
    bool repeat_of_prior = false;  // model reproduced an earlier breakdown
};

// Accumulates every gateway completion attributed to the module that asked
// for it; the orchestrator folds this into the trace.
class CallLog {
public:
    void add(const std::string& module, const std::string& model, const Completion& c);
    const std::vector<ModuleCall>& calls() const { return calls_; }
    int64_t total_tokens() const;
    bool any_approx() const;

private:
    std::vector<ModuleCall> calls_;
};

// Per-module model assignment: one default spec, optionally overridden per
// module name (template names double as module names).
class ModelMap {
public:
    ModelMap() = default;
    explicit ModelMap(ModelSpec default_spec) : default_spec_(std::move(default_spec)) {}

    void set_default(ModelSpec spec) { default_spec_ = std::move(spec); }
    void set_module(const std::string& module, ModelSpec spec);
    const ModelSpec& for_module(const std::string& module) const;
    const ModelSpec& default_spec() const { return default_spec_; }
    const std::map<std::string, ModelSpec>& overrides() const { return overrides_; }

private:
    ModelSpec default_spec_;
    std::map<std::string, ModelSpec> overrides_;
};

// Shared boolean grammar: trimmed, case-insensitive "true"/"false".
bool parse_bool_output(const std::string& raw);

// `[n]` identifiers in order of appearance, repeats kept.
std::vector<int> ranking_ids_in(const std::string& line);

// Deterministic rerank repair: drop ids outside 1..batch_size, keep first
// occurrence of each, truncate to 10, then append missing ids in retrieval
// order until the result has min(10, batch_size) entries.
std::vector<int> repair_ranking(const std::vector<int>& ids, int batch_size);

// Numbered-line plan grammar shared by decomposition and its reflection
// variant. "None" (any case) yields an empty list.
std::vector<SubQuestion> parse_plan_output(const std::string& output_field);

// Passage list as shown to models: one "[id] title: text" line per passage.
std::string render_passage_context(const std::vector<Passage>& passages);

// History as "Question #i / Answer #i / Reasoning #i" blocks; "none" when empty.
std::string format_history(const std::vector<QARecord>& history);

// Reorders a batch by rerank order; local_ids are kept as retrieved.
std::vector<Passage> apply_order(const std::vector<Passage>& batch,
                                 const std::vector<int>& order);

inline constexpr const char* kAbstentionRejectReason =
    "abstention answers are rejected without verification";
inline constexpr const char* kDecompositionAppropriateSentinel =
    "The previous decomposition is appropriate";
inline constexpr const char* kFormatReminder = "Please follow the output format.";

class ReasoningModules {
public:
    ReasoningModules(Gateway& gateway, const TemplateSet& templates, const ModelMap& models)
        : gateway_(gateway), templates_(templates), models_(models) {}

    DecompositionPlan decompose(const Question& q, CallLog& log) const;
    ConstructResult construct(const Question& q, const std::vector<QARecord>& history,
                              const SubQuestion& sub, CallLog& log) const;
    RetrievalDecision decide_retrieval(const std::string& q, CallLog& log) const;
    std::string rewrite_query(const std::string& q, const std::optional<std::string>& last,
                              CallLog& log) const;
    RerankResult rerank(const std::string& query, const std::vector<Passage>& batch,
                        CallLog& log) const;
    AnswerResult answer(const std::string& q, const std::vector<Passage>& passages,
                        const std::string& background, CallLog& log) const;
    Verdict verify(const std::string& q, const CitedAnswer& a,
                   const std::vector<Passage>& cited_passages, CallLog& log) const;
    Verdict verify_final(const std::string& q, const CitedAnswer& a,
                         const std::vector<Passage>& passages, CallLog& log) const;
    AnswerResult finalize(const Question& q, const std::vector<QARecord>& history,
                          CallLog& log) const;
    AnalysisResult improve_analysis(const Question& q, const PipelineTrace& record,
                                    CallLog& log) const;
    ImprovedPlan improve_decomposition(const Question& q, const std::vector<PriorPlan>& prior,
                                       CallLog& log) const;
    bool llm_eval(const Question& q, const std::string& prediction,
                  const std::vector<std::string>& gold, CallLog& log) const;

private:
    // render + complete + log; on FormatError from `parse`, live backends get
    // one retry with an appended format reminder.
    template <typename Parse>
    auto call(const std::string& module,
              const std::map<std::string, std::string>& bindings, CallLog& log,
              Parse&& parse) const;

    Completion complete_once(const std::string& module, const std::string& prompt,
                             CallLog& log) const;

    Gateway& gateway_;
    const TemplateSet& templates_;
    const ModelMap& models_;
};

}  // namespace hopqa
