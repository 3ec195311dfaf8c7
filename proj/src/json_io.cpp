#include "hopqa/json_io.hpp"

namespace hopqa {

namespace {

template <typename T, typename Fn>
Json array_of(const std::vector<T>& xs, Fn&& fn) {
    Json arr = Json::array();
    for (const auto& x : xs) arr.push_back(fn(x));
    return arr;
}

void require(bool cond, const std::string& what) {
    if (!cond) throw InvariantViolation("trace schema: " + what);
}

void require_fields(const Json& j, std::initializer_list<const char*> names,
                    const std::string& where) {
    require(j.is_object(), where + " must be an object");
    for (const char* n : names) require(j.contains(n), where + " missing field \"" + n + "\"");
}

}  // namespace

Json to_json(const Question& q) {
    Json j;
    j["id"] = q.id;
    j["text"] = q.text;
    j["gold_answers"] = q.gold_answers;
    return j;
}

Question question_from_json(const Json& j) {
    Question q;
    q.id = j.at("id").get<std::string>();
    q.text = j.at("text").get<std::string>();
    if (j.contains("gold_answers")) q.gold_answers = j.at("gold_answers").get<std::vector<std::string>>();
    return q;
}

Json to_json(const SubQuestion& s) {
    Json j;
    j["index"] = s.index;
    j["template_text"] = s.template_text;
    j["resolved_text"] = s.resolved_text ? Json(*s.resolved_text) : Json(nullptr);
    return j;
}

SubQuestion sub_question_from_json(const Json& j) {
    SubQuestion s;
    s.index = j.at("index").get<int>();
    s.template_text = j.at("template_text").get<std::string>();
    if (j.contains("resolved_text") && !j.at("resolved_text").is_null())
        s.resolved_text = j.at("resolved_text").get<std::string>();
    return s;
}

Json to_json(const DecompositionPlan& p) {
    Json j;
    j["original"] = to_json(p.original);
    j["reasoning"] = p.reasoning;
    j["subs"] = array_of(p.subs, [](const SubQuestion& s) { return to_json(s); });
    j["generation"] = p.generation;
    return j;
}

DecompositionPlan plan_from_json(const Json& j) {
    DecompositionPlan p;
    p.original = question_from_json(j.at("original"));
    p.reasoning = j.at("reasoning").get<std::string>();
    for (const auto& s : j.at("subs")) p.subs.push_back(sub_question_from_json(s));
    p.generation = j.at("generation").get<int>();
    return p;
}

Json to_json(const CitedAnswer& a) {
    Json j;
    j["text"] = a.text;
    j["citations"] = a.citations;  // std::set serializes sorted
    j["is_abstention"] = a.is_abstention;
    return j;
}

CitedAnswer cited_answer_from_json(const Json& j) {
    CitedAnswer a;
    a.text = j.at("text").get<std::string>();
    for (const auto& c : j.at("citations")) a.citations.insert(c.get<int>());
    a.is_abstention = j.at("is_abstention").get<bool>();
    return a;
}

Json to_json(const QARecord& r) {
    Json j;
    j["sub_question"] = to_json(r.sub_question);
    j["reasoning"] = r.reasoning;
    j["answer"] = to_json(r.answer);
    return j;
}

QARecord qa_record_from_json(const Json& j) {
    QARecord r;
    r.sub_question = sub_question_from_json(j.at("sub_question"));
    r.reasoning = j.at("reasoning").get<std::string>();
    r.answer = cited_answer_from_json(j.at("answer"));
    return r;
}

Json to_json(const Passage& p) {
    Json j;
    j["local_id"] = p.local_id;
    j["doc_id"] = p.doc_id;
    j["title"] = p.title;
    j["text"] = p.text;
    j["score"] = p.score;
    return j;
}

Passage passage_from_json(const Json& j) {
    Passage p;
    p.local_id = j.at("local_id").get<int>();
    p.doc_id = j.at("doc_id").get<std::string>();
    p.title = j.at("title").get<std::string>();
    p.text = j.at("text").get<std::string>();
    p.score = j.at("score").get<double>();
    return p;
}

Json to_json(const Verdict& v) {
    Json j;
    j["accepted"] = v.accepted;
    j["reason"] = v.reason;
    return j;
}

Verdict verdict_from_json(const Json& j) {
    Verdict v;
    v.accepted = j.at("accepted").get<bool>();
    v.reason = j.at("reason").get<std::string>();
    return v;
}

Json to_json(const StepTrace& s) {
    Json j;
    j["step_index"] = s.step_index;
    j["constructed_query"] = s.constructed_query;
    j["retrieval_needed"] = s.retrieval_needed;
    j["rewrites"] = s.rewrites;
    j["retrieved"] = array_of(s.retrieved, [](const Passage& p) { return to_json(p); });
    j["reranked_order"] = s.reranked_order;
    j["record"] = to_json(s.record);
    j["step_verdict"] = to_json(s.step_verdict);
    j["retries_used"] = s.retries_used;
    return j;
}

StepTrace step_trace_from_json(const Json& j) {
    StepTrace s;
    s.step_index = j.at("step_index").get<int>();
    s.constructed_query = j.at("constructed_query").get<std::string>();
    s.retrieval_needed = j.at("retrieval_needed").get<bool>();
    s.rewrites = j.at("rewrites").get<std::vector<std::string>>();
    for (const auto& p : j.at("retrieved")) s.retrieved.push_back(passage_from_json(p));
    s.reranked_order = j.at("reranked_order").get<std::vector<int>>();
    s.record = qa_record_from_json(j.at("record"));
    s.step_verdict = verdict_from_json(j.at("step_verdict"));
    s.retries_used = j.at("retries_used").get<int>();
    return s;
}

Json to_json(const Attempt& a) {
    Json j;
    j["plan"] = to_json(a.plan);
    j["steps"] = array_of(a.steps, [](const StepTrace& s) { return to_json(s); });
    j["final"] = to_json(a.final);
    j["verdict"] = to_json(a.verdict);
    return j;
}

Attempt attempt_from_json(const Json& j) {
    Attempt a;
    a.plan = plan_from_json(j.at("plan"));
    for (const auto& s : j.at("steps")) a.steps.push_back(step_trace_from_json(s));
    a.final = cited_answer_from_json(j.at("final"));
    a.verdict = verdict_from_json(j.at("verdict"));
    return a;
}

Json to_json(const ModuleCall& c) {
    Json j;
    j["module"] = c.module;
    j["model"] = c.model;
    j["prompt_tokens"] = c.prompt_tokens;
    j["completion_tokens"] = c.completion_tokens;
    j["approx_tokens"] = c.approx_tokens;
    return j;
}

ModuleCall module_call_from_json(const Json& j) {
    ModuleCall c;
    c.module = j.at("module").get<std::string>();
    c.model = j.at("model").get<std::string>();
    c.prompt_tokens = j.at("prompt_tokens").get<int>();
    c.completion_tokens = j.at("completion_tokens").get<int>();
    c.approx_tokens = j.at("approx_tokens").get<bool>();
    return c;
}

Json to_json(const PipelineTrace& t) {
    Json j;
    j["schema"] = kTraceSchemaId;
    j["question"] = to_json(t.question);
    j["route"] = route_name(t.route);
    j["simple_attempt"] = t.simple_attempt ? to_json(*t.simple_attempt) : Json(nullptr);
    j["attempts"] = array_of(t.attempts, [](const Attempt& a) { return to_json(a); });
    j["final"] = to_json(t.final);
    j["final_verdict"] = to_json(t.final_verdict);
    j["final_unverified"] = t.final_unverified;
    j["module_calls"] = array_of(t.module_calls, [](const ModuleCall& c) { return to_json(c); });
    j["token_usage"] = t.token_usage;
    j["token_usage_approx"] = t.token_usage_approx;
    j["wall_time"] = t.wall_time;
    j["error"] = t.error;
    return j;
}

PipelineTrace trace_from_json(const Json& j) {
    PipelineTrace t;
    t.question = question_from_json(j.at("question"));
    t.route = route_from_name(j.at("route").get<std::string>());
    if (j.contains("simple_attempt") && !j.at("simple_attempt").is_null())
        t.simple_attempt = attempt_from_json(j.at("simple_attempt"));
    for (const auto& a : j.at("attempts")) t.attempts.push_back(attempt_from_json(a));
    t.final = cited_answer_from_json(j.at("final"));
    t.final_verdict = verdict_from_json(j.at("final_verdict"));
    t.final_unverified = j.at("final_unverified").get<bool>();
    for (const auto& c : j.at("module_calls")) t.module_calls.push_back(module_call_from_json(c));
    t.token_usage = j.at("token_usage").get<int64_t>();
    t.token_usage_approx = j.at("token_usage_approx").get<bool>();
    t.wall_time = j.at("wall_time").get<double>();
    t.error = j.at("error").get<std::string>();
    return t;
}

namespace {

void validate_answer_json(const Json& j, const std::string& where) {
    require_fields(j, {"text", "citations", "is_abstention"}, where);
    require(j.at("text").is_string(), where + ".text must be a string");
    require(j.at("citations").is_array(), where + ".citations must be an array");
    require(j.at("is_abstention").is_boolean(), where + ".is_abstention must be a bool");
}

void validate_verdict_json(const Json& j, const std::string& where) {
    require_fields(j, {"accepted", "reason"}, where);
    require(j.at("accepted").is_boolean(), where + ".accepted must be a bool");
    require(j.at("reason").is_string(), where + ".reason must be a string");
}

void validate_attempt_json(const Json& j, const std::string& where) {
    require_fields(j, {"plan", "steps", "final", "verdict"}, where);
    const Json& plan = j.at("plan");
    require_fields(plan, {"original", "reasoning", "subs", "generation"}, where + ".plan");
    require(plan.at("subs").is_array(), where + ".plan.subs must be an array");
    for (size_t i = 0; i < plan.at("subs").size(); ++i)
        require_fields(plan.at("subs")[i], {"index", "template_text", "resolved_text"},
                       where + ".plan.subs[" + std::to_string(i) + "]");
    require(j.at("steps").is_array(), where + ".steps must be an array");
    for (size_t i = 0; i < j.at("steps").size(); ++i) {
        const std::string sw = where + ".steps[" + std::to_string(i) + "]";
        const Json& s = j.at("steps")[i];
        require_fields(s,
                       {"step_index", "constructed_query", "retrieval_needed", "rewrites",
                        "retrieved", "reranked_order", "record", "step_verdict", "retries_used"},
                       sw);
        for (size_t p = 0; p < s.at("retrieved").size(); ++p)
            require_fields(s.at("retrieved")[p], {"local_id", "doc_id", "title", "text", "score"},
                           sw + ".retrieved[" + std::to_string(p) + "]");
        require_fields(s.at("record"), {"sub_question", "reasoning", "answer"}, sw + ".record");
        validate_answer_json(s.at("record").at("answer"), sw + ".record.answer");
        validate_verdict_json(s.at("step_verdict"), sw + ".step_verdict");
    }
    validate_answer_json(j.at("final"), where + ".final");
    validate_verdict_json(j.at("verdict"), where + ".verdict");
}

}  // namespace

void validate_trace_json(const Json& j) {
    require_fields(j,
                   {"schema", "question", "route", "simple_attempt", "attempts", "final",
                    "final_verdict", "final_unverified", "module_calls", "token_usage",
                    "token_usage_approx", "wall_time", "error"},
                   "trace");
    require(j.at("schema").get<std::string>() == kTraceSchemaId,
            "schema must be \"" + std::string(kTraceSchemaId) + "\"");
    require_fields(j.at("question"), {"id", "text", "gold_answers"}, "trace.question");
    const std::string route = j.at("route").get<std::string>();
    require(route == "simple" || route == "multihop" || route == "simple_escalated",
            "route must be simple|multihop|simple_escalated");
    if (!j.at("simple_attempt").is_null())
        validate_attempt_json(j.at("simple_attempt"), "trace.simple_attempt");
    require(j.at("attempts").is_array(), "attempts must be an array");
    for (size_t i = 0; i < j.at("attempts").size(); ++i)
        validate_attempt_json(j.at("attempts")[i], "trace.attempts[" + std::to_string(i) + "]");
    validate_answer_json(j.at("final"), "trace.final");
    validate_verdict_json(j.at("final_verdict"), "trace.final_verdict");
    require(j.at("module_calls").is_array(), "module_calls must be an array");
    for (size_t i = 0; i < j.at("module_calls").size(); ++i)
        require_fields(j.at("module_calls")[i],
                       {"module", "model", "prompt_tokens", "completion_tokens", "approx_tokens"},
                       "trace.module_calls[" + std::to_string(i) + "]");
    require(j.at("token_usage").is_number_integer(), "token_usage must be an integer");
    require(j.at("wall_time").is_number(), "wall_time must be a number");
    require(j.at("error").is_string(), "error must be a string");
}

std::string dump_trace(const PipelineTrace& t) { return to_json(t).dump(2) + "\n"; }

}  // namespace hopqa
