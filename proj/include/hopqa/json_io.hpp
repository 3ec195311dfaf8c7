#pragma once
// Canonical JSON serialization for the domain types. Field names and order
// are frozen by docs/trace-schema-v1.md; ordered_json keeps emission
// deterministic so scripted replays produce byte-identical files.

#include <nlohmann/json.hpp>

#include "hopqa/core.hpp"

namespace hopqa {

using Json = nlohmann::ordered_json;

inline constexpr const char* kTraceSchemaId = "hopqa.trace.v1";

Json to_json(const Question& q);
Json to_json(const SubQuestion& s);
Json to_json(const DecompositionPlan& p);
Json to_json(const CitedAnswer& a);
Json to_json(const QARecord& r);
Json to_json(const Passage& p);
Json to_json(const Verdict& v);
Json to_json(const StepTrace& s);
Json to_json(const Attempt& a);
Json to_json(const ModuleCall& c);
Json to_json(const PipelineTrace& t);

Question question_from_json(const Json& j);
SubQuestion sub_question_from_json(const Json& j);
DecompositionPlan plan_from_json(const Json& j);
CitedAnswer cited_answer_from_json(const Json& j);
QARecord qa_record_from_json(const Json& j);
Passage passage_from_json(const Json& j);
Verdict verdict_from_json(const Json& j);
StepTrace step_trace_from_json(const Json& j);
Attempt attempt_from_json(const Json& j);
ModuleCall module_call_from_json(const Json& j);
PipelineTrace trace_from_json(const Json& j);

// Checks a serialized trace against the frozen v1 schema; throws
// InvariantViolation naming the offending field on the first mismatch.
void validate_trace_json(const Json& j);

// Canonical on-disk form: 2-space indent plus trailing newline.
std::string dump_trace(const PipelineTrace& t);

}  // namespace hopqa
