#pragma once
// Simple QA pipeline, Advanced Multi-Hop pipeline, escalation between them,
// and the bounded self-reflection loop around the multi-hop attempts.

#include <memory>
#include <string>

#include "hopqa/core.hpp"
#include "hopqa/modules.hpp"
#include "hopqa/retrieval.hpp"

namespace hopqa {

struct EnableFlags {
    bool qd = true;         // question decomposition
    bool qc = true;         // question construction (paired with qd)
    bool qr = true;         // query rewriting (requires av)
    bool pr = true;         // passage reranking
    bool av = true;         // answer verification
    bool rd = true;         // retrieval decision
    bool simple_qa = true;  // single-retrieval fast path with escalation
};

struct PipelineConfig {
    EnableFlags enable;
    ModelMap models;
    ModelSpec judge;  // LLM-Eval judge model
    int max_reflections = 3;
    int per_step_retries = 1;
    RetrieverConfig retrieval;
    std::string templates_dir = "templates";
    std::string script_path;  // queued responses for the scripted backend
    int parallel = 1;

    // Enforces the module couplings (QD and QC are paired; QR requires AV)
    // and every nested spec's invariants.
    void validate() const;
    // True when no configured model can reach a live backend; such runs use
    // a fixed clock so replays are byte-identical.
    bool fully_scripted() const;
};

// Runs questions through the configured pipelines. Stateless per question;
// one engine can serve concurrent solve() calls.
class Engine {
public:
    Engine(const PipelineConfig& cfg, Gateway& gateway, const TemplateSet& templates,
           const Retriever& retriever);

    // Route through Simple QA when enabled, escalate to the multi-hop
    // pipeline on rejection, and reflect on the decomposition until the
    // final verdict accepts or the budget runs out. Unrecoverable faults
    // yield an abstention trace with `error` set instead of throwing.
    PipelineTrace solve(const Question& q) const;

    // Single Simple-QA attempt: retrieve, answer with background "none",
    // verify against the cited passages.
    Attempt run_simple(const Question& q, CallLog& log) const;

    // One multi-hop pass over a decomposition plan. An empty plan runs the
    // whole question as a single step with finalization skipped.
    Attempt run_multihop(const Question& q, const DecompositionPlan& plan, CallLog& log) const;

    const ReasoningModules& modules() const { return modules_; }
    const PipelineConfig& config() const { return cfg_; }

private:
    struct StepOutcome {
        StepTrace trace;
        QARecord record;
    };
    StepOutcome run_step(const Question& q, const SubQuestion& sub,
                         const std::vector<QARecord>& history, bool single_step,
                         CallLog& log) const;
    std::vector<Passage> retrieve_batch(const std::string& query) const;
    std::vector<Passage> final_verification_passages(const Attempt& attempt) const;

    const PipelineConfig& cfg_;
    const Retriever& retriever_;
    ReasoningModules modules_;
};

}  // namespace hopqa
