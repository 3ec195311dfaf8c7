#pragma once
// Domain types shared by the pipelines. All types are immutable by
// convention once constructed and safe to share across threads.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hopqa/errors.hpp"

namespace hopqa {

// The exact abstention sentinel the prompts mandate. Matching is done
// after trimming and is case sensitive.
inline constexpr const char* kAbstentionSentinel = "I don't know.";

struct Question {
    std::string id;
    std::string text;
    std::vector<std::string> gold_answers;  // evaluation only, may be empty

    void validate() const;
};

struct SubQuestion {
    int index = 1;  // 1-based position in the plan
    std::string template_text;
    std::optional<std::string> resolved_text;

    void validate() const;
};

struct DecompositionPlan {
    Question original;
    std::string reasoning;
    std::vector<SubQuestion> subs;  // empty iff the decomposer said "None"
    int generation = 0;             // 0 = initial, k = k-th reflection

    void validate() const;
    // True when both plans list the same sub-question texts in order.
    bool same_breakdown(const DecompositionPlan& other) const;
};

struct CitedAnswer {
    std::string text;
    std::set<int> citations;
    bool is_abstention = false;

    static CitedAnswer abstention();
    void validate() const;
};

struct QARecord {
    SubQuestion sub_question;  // resolved_text must be present
    std::string reasoning;
    CitedAnswer answer;

    void validate() const;
};

struct Passage {
    int local_id = 0;  // identifier within one retrieval batch, 1..k
    std::string doc_id;
    std::string title;
    std::string text;
    double score = 0.0;
};

struct Verdict {
    bool accepted = false;
    std::string reason;

    void validate() const;
};

struct StepTrace {
    int step_index = 0;
    std::string constructed_query;
    bool retrieval_needed = true;
    std::vector<std::string> rewrites;
    std::vector<Passage> retrieved;
    std::vector<int> reranked_order;
    QARecord record;
    Verdict step_verdict;
    int retries_used = 0;
};

struct Attempt {
    DecompositionPlan plan;
    std::vector<StepTrace> steps;
    CitedAnswer final;
    Verdict verdict;
};

// One gateway completion, attributed to the module that requested it.
struct ModuleCall {
    std::string module;
    std::string model;
    int prompt_tokens = 0;
    int completion_tokens = 0;
    bool approx_tokens = false;  // whitespace fallback, backend gave no usage
};

enum class Route { simple, multihop, simple_escalated };

const char* route_name(Route r);
Route route_from_name(const std::string& name);

// Complete solving record for one question. `attempts` holds the
// reflection-loop (multi-hop) attempts; a Simple-QA phase, when it ran, is
// kept in `simple_attempt` so the attempts bound stays 1 + max_reflections.
struct PipelineTrace {
    Question question;
    Route route = Route::multihop;
    std::optional<Attempt> simple_attempt;
    std::vector<Attempt> attempts;
    CitedAnswer final;
    Verdict final_verdict;
    bool final_unverified = false;  // budget exhausted or verification disabled
    std::vector<ModuleCall> module_calls;
    int64_t token_usage = 0;  // prompt + completion, summed over every call
    bool token_usage_approx = false;
    double wall_time = 0.0;  // seconds; 0 under the scripted backend
    std::string error;       // non-empty when the run hit an unrecoverable fault
};

// --- operations -------------------------------------------------------

// Deterministic fallback beneath the LLM constructor: replaces every `#k`
// with the verbatim answer text of history entry k. Placeholders are `#`
// followed by one or more ASCII digits, tokenized greedily (`#10` is 10).
// Throws ForwardReference when k >= sub.index, MissingAntecedent when the
// history has no record for k.
std::string substitute_placeholders(const SubQuestion& sub, const std::vector<QARecord>& history);

// True if the text contains any `#<digits>` placeholder token.
bool has_placeholder(std::string_view text);
// All placeholder indices in order of appearance (with repeats).
std::vector<int> placeholder_indices(std::string_view text);

// Pulls `[n]` citation markers out of a raw model answer. Unparseable
// bracket contents are ignored. The abstention sentinel clears citations.
CitedAnswer extract_citations(const std::string& raw_answer);

}  // namespace hopqa
