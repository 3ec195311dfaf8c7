#include "hopqa/modules.hpp"

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hopqa/text.hpp"

namespace hopqa {

void CallLog::add(const std::string& module, const std::string& model, const Completion& c) {
    calls_.push_back({module, model, c.prompt_tokens, c.completion_tokens, c.approx_tokens});
}

int64_t CallLog::total_tokens() const {
    int64_t sum = 0;
    for (const auto& c : calls_) sum += c.prompt_tokens + c.completion_tokens;
    return sum;
}

bool CallLog::any_approx() const {
    return std::any_of(calls_.begin(), calls_.end(),
                       [](const ModuleCall& c) { return c.approx_tokens; });
}

void ModelMap::set_module(const std::string& module, ModelSpec spec) {
    overrides_[module] = std::move(spec);
}

const ModelSpec& ModelMap::for_module(const std::string& module) const {
    auto it = overrides_.find(module);
    return it == overrides_.end() ? default_spec_ : it->second;
}

bool parse_bool_output(const std::string& raw) {
    std::string t(text::trim(raw));
    std::transform(t.begin(), t.end(), t.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (t == "true") return true;
    if (t == "false") return false;
    throw UnparseableBoolean(std::string(text::trim(raw)));
}

std::vector<int> ranking_ids_in(const std::string& line) {
    std::vector<int> ids;
    size_t i = 0;
    while (i < line.size()) {
        if (line[i] != '[') {
            ++i;
            continue;
        }
        size_t j = i + 1;
        while (j < line.size() && line[j] >= '0' && line[j] <= '9') ++j;
        if (j > i + 1 && j < line.size() && line[j] == ']' && j - i - 1 <= 9) {
            int n = 0;
            for (size_t p = i + 1; p < j; ++p) n = n * 10 + (line[p] - '0');
            ids.push_back(n);
            i = j + 1;
        } else {
            ++i;
        }
    }
    return ids;
}

std::vector<int> repair_ranking(const std::vector<int>& ids, int batch_size) {
    std::vector<int> order;
    std::vector<bool> seen(static_cast<size_t>(batch_size) + 1, false);
    for (int id : ids) {
        if (id < 1 || id > batch_size) continue;  // drop unknown
        if (seen[id]) continue;                   // dedupe, first occurrence wins
        seen[id] = true;
        order.push_back(id);
        if (order.size() == 10) break;  // truncate to the prompt's top-10
    }
    const size_t want = std::min<size_t>(10, static_cast<size_t>(batch_size));
    for (int id = 1; id <= batch_size && order.size() < want; ++id) {
        if (!seen[id]) {
            seen[id] = true;
            order.push_back(id);  // append missing in retrieval order
        }
    }
    return order;
}

std::vector<SubQuestion> parse_plan_output(const std::string& output_field) {
    std::string body(text::trim(output_field));
    std::string lowered = body;
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (lowered == "none") return {};

    std::vector<SubQuestion> subs;
    std::istringstream in(body);
    std::string line;
    while (std::getline(in, line)) {
        auto t = text::trim(line);
        if (t.empty()) continue;
        size_t d = 0;
        while (d < t.size() && t[d] >= '0' && t[d] <= '9') ++d;
        bool numbered = d > 0 && d <= 9 && d < t.size() && (t[d] == '.' || t[d] == ')');
        if (!numbered) {
            if (subs.empty()) throw MalformedPlan("plan line lacks numbering: \"" + line + "\"");
            subs.back().template_text += " " + std::string(t);  // wrapped continuation
            continue;
        }
        int num = 0;
        for (size_t p = 0; p < d; ++p) num = num * 10 + (t[p] - '0');
        if (num != static_cast<int>(subs.size()) + 1)
            throw MalformedPlan("plan numbering is not contiguous at line \"" + line + "\"");
        SubQuestion sub;
        sub.index = num;
        sub.template_text = std::string(text::trim(t.substr(d + 1)));
        subs.push_back(std::move(sub));
    }
    if (subs.empty()) throw MalformedPlan("plan output holds no sub-questions");
    for (const auto& sub : subs)
        for (int k : placeholder_indices(sub.template_text))
            if (k < 1 || k >= sub.index)
                throw MalformedPlan("sub-question " + std::to_string(sub.index) +
                                    " references #" + std::to_string(k));
    return subs;
}

std::string render_passage_context(const std::vector<Passage>& passages) {
    if (passages.empty()) return "none";
    std::string out;
    for (const auto& p : passages) {
        if (!out.empty()) out.push_back('\n');
        out += "[" + std::to_string(p.local_id) + "] ";
        if (!p.title.empty()) {
            out += p.title;
            out += ": ";
        }
        out += p.text;
    }
    return out;
}

std::string format_history(const std::vector<QARecord>& history) {
    if (history.empty()) return "none";
    std::string out;
    for (const auto& rec : history) {
        const std::string n = std::to_string(rec.sub_question.index);
        out += "Question #" + n + ": " + rec.sub_question.resolved_text.value_or("") + "\n";
        out += "Answer #" + n + ": " + rec.answer.text + "\n";
        out += "Reasoning #" + n + ": " + rec.reasoning + "\n";
    }
    out.pop_back();
    return out;
}

std::vector<Passage> apply_order(const std::vector<Passage>& batch,
                                 const std::vector<int>& order) {
    std::vector<Passage> out;
    out.reserve(order.size());
    for (int id : order)
        for (const auto& p : batch)
            if (p.local_id == id) {
                out.push_back(p);
                break;
            }
    return out;
}

Completion ReasoningModules::complete_once(const std::string& module, const std::string& prompt,
                                           CallLog& log) const {
    const ModelSpec& spec = models_.for_module(module);
    Completion c = gateway_.complete(spec, prompt);
    log.add(module, spec.model_name, c);
    return c;
}

template <typename Parse>
auto ReasoningModules::call(const std::string& module,
                            const std::map<std::string, std::string>& bindings, CallLog& log,
                            Parse&& parse) const {
    const PromptTemplate& tmpl = templates_.get(module);
    const std::string prompt = render(tmpl, bindings);
    Completion first = complete_once(module, prompt, log);
    try {
        return parse(first.text);
    } catch (const FormatError&) {
        if (models_.for_module(module).backend != BackendKind::http) throw;
        Completion second =
            complete_once(module, prompt + "\n" + kFormatReminder, log);
        return parse(second.text);
    }
}

DecompositionPlan ReasoningModules::decompose(const Question& q, CallLog& log) const {
    q.validate();
    return call("decomposition", {{"Question", q.text}}, log, [&](const std::string& out) {
        auto fields = parse_fields(out, {"Reasoning", "Output"});
        DecompositionPlan plan;
        plan.original = q;
        plan.reasoning = fields.at("Reasoning");
        plan.subs = parse_plan_output(fields.at("Output"));
        plan.generation = 0;
        return plan;
    });
}

ConstructResult ReasoningModules::construct(const Question& q,
                                            const std::vector<QARecord>& history,
                                            const SubQuestion& sub, CallLog& log) const {
    for (int k : placeholder_indices(sub.template_text)) {
        if (k >= sub.index) throw ForwardReference(k);
        bool covered = std::any_of(history.begin(), history.end(), [&](const QARecord& r) {
            return r.sub_question.index == k;
        });
        if (!covered) throw MissingAntecedent(k);
    }
    std::map<std::string, std::string> bindings = {
        {"Original Question", q.text},
        {"Question-Answer Pairs", format_history(history)},
        {"New Question", sub.template_text},
    };
    return call("construction", bindings, log, [&](const std::string& out) {
        auto fields = parse_fields(out, {"Rewritten Question"});
        ConstructResult res;
        res.text = fields.at("Rewritten Question");
        if (res.text.empty() || has_placeholder(res.text)) {
            res.text = substitute_placeholders(sub, history);
            res.used_fallback = true;
        }
        return res;
    });
}

RetrievalDecision ReasoningModules::decide_retrieval(const std::string& q, CallLog& log) const {
    if (text::trim(q).empty()) throw PreconditionError("decide_retrieval: question is empty");
    return call("retrieval_decision", {{"Question", q}}, log, [&](const std::string& out) {
        auto fields = parse_fields(out, {"Analysis", "Output"});
        return RetrievalDecision{parse_bool_output(fields.at("Output")), fields.at("Analysis")};
    });
}

std::string ReasoningModules::rewrite_query(const std::string& q,
                                            const std::optional<std::string>& last,
                                            CallLog& log) const {
    std::map<std::string, std::string> bindings = {
        {"Question", q},
        {"Last Rewritten Query", last.value_or("none")},
    };
    auto attempt = [&]() -> std::string {
        auto fields = call("query_rewriting", bindings, log, [&](const std::string& out) {
            return parse_fields(out, {"New Query"});
        });
        return fields.at("New Query");
    };
    const bool live = models_.for_module("query_rewriting").backend == BackendKind::http;
    auto degenerate = [&](const std::string& rewritten) {
        return rewritten.empty() || (last && rewritten == *last);
    };
    try {
        std::string rewritten = attempt();
        if (degenerate(rewritten) && live) rewritten = attempt();
        return degenerate(rewritten) ? q : rewritten;
    } catch (const Error&) {
        return q;  // degenerate rewrites fall back to the question itself
    }
}

RerankResult ReasoningModules::rerank(const std::string& query,
                                      const std::vector<Passage>& batch, CallLog& log) const {
    if (batch.empty()) throw PreconditionError("rerank: batch is empty");
    for (size_t i = 0; i < batch.size(); ++i)
        if (batch[i].local_id != static_cast<int>(i) + 1)
            throw PreconditionError("rerank: local_ids must be contiguous 1..k");

    std::string identifiers;
    for (size_t i = 1; i <= batch.size(); ++i) {
        if (!identifiers.empty()) identifiers += ", ";
        identifiers += "[" + std::to_string(i) + "]";
    }
    std::map<std::string, std::string> bindings = {
        {"Query", query},
        {"Identifiers", identifiers},
        {"Context", render_passage_context(batch)},
    };
    const int k = static_cast<int>(batch.size());
    return call("reranking", bindings, log, [&](const std::string& out) {
        RerankResult res;
        std::string line = out;
        try {
            auto fields = parse_fields(out, {"Reasoning", "Output"});
            res.reasoning = fields.at("Reasoning");
            line = fields.at("Output");
        } catch (const FormatError&) {
            // tolerate a bare ranking line; ids are salvaged from the raw text
        }
        auto raw_ids = ranking_ids_in(line);
        bool any_valid = std::any_of(raw_ids.begin(), raw_ids.end(),
                                     [&](int id) { return id >= 1 && id <= k; });
        if (!any_valid) throw UnparseableRanking(std::string(text::trim(line)));
        res.order = repair_ranking(raw_ids, k);
        return res;
    });
}

AnswerResult ReasoningModules::answer(const std::string& q,
                                      const std::vector<Passage>& passages,
                                      const std::string& background, CallLog& log) const {
    std::map<std::string, std::string> bindings = {
        {"Question", q},
        {"Context", render_passage_context(passages)},
        {"Background", background},
    };
    return call("answer_generation", bindings, log, [&](const std::string& out) {
        auto fields = parse_fields(out, {"Reasoning", "Output"});
        AnswerResult res;
        res.answer = extract_citations(fields.at("Output"));
        res.reasoning = fields.at("Reasoning");
        // citations must refer to the batch they were generated against
        std::erase_if(res.answer.citations, [&](int id) {
            return std::none_of(passages.begin(), passages.end(),
                                [&](const Passage& p) { return p.local_id == id; });
        });
        return res;
    });
}

namespace {
Verdict parsed_verdict(const std::map<std::string, std::string>& fields) {
    Verdict v;
    v.accepted = parse_bool_output(fields.at("Output"));
    v.reason = fields.at("Reason");
    if (!v.accepted && text::trim(v.reason).empty()) v.reason = "verifier returned false";
    return v;
}
}  // namespace

Verdict ReasoningModules::verify(const std::string& q, const CitedAnswer& a,
                                 const std::vector<Passage>& cited_passages,
                                 CallLog& log) const {
    if (a.is_abstention) return Verdict{false, kAbstentionRejectReason};
    std::map<std::string, std::string> bindings = {
        {"Question", q},
        {"Answer", a.text},
        {"Source", render_passage_context(cited_passages)},
    };
    return call("answer_verification", bindings, log, [&](const std::string& out) {
        return parsed_verdict(parse_fields(out, {"Reason", "Output"}));
    });
}

Verdict ReasoningModules::verify_final(const std::string& q, const CitedAnswer& a,
                                       const std::vector<Passage>& passages,
                                       CallLog& log) const {
    if (a.is_abstention) return Verdict{false, kAbstentionRejectReason};
    std::map<std::string, std::string> bindings = {
        {"Question", q},
        {"Answer", a.text},
        {"Passages", render_passage_context(passages)},
    };
    return call("final_answer_verification", bindings, log, [&](const std::string& out) {
        return parsed_verdict(parse_fields(out, {"Reason", "Output"}));
    });
}

AnswerResult ReasoningModules::finalize(const Question& q,
                                        const std::vector<QARecord>& history,
                                        CallLog& log) const {
    if (history.empty()) throw PreconditionError("finalize: history is empty");
    std::map<std::string, std::string> bindings = {
        {"Question", q.text},
        {"Decomposed Information", format_history(history)},
    };
    return call("final_answering", bindings, log, [&](const std::string& out) {
        auto fields = parse_fields(out, {"Reasoning", "Answer"});
        return AnswerResult{extract_citations(fields.at("Answer")), fields.at("Reasoning")};
    });
}

namespace {

std::string format_plan_lines(const DecompositionPlan& plan) {
    std::string out;
    for (const auto& sub : plan.subs)
        out += std::to_string(sub.index) + ". " + sub.template_text + "\n";
    if (out.empty()) out = "None\n";
    return out;
}

std::string format_solving_record(const PipelineTrace& record) {
    std::string out;
    for (size_t a = 0; a < record.attempts.size(); ++a) {
        const Attempt& attempt = record.attempts[a];
        out += "Decomposition " + std::to_string(a + 1) + ":\n";
        out += format_plan_lines(attempt.plan);
        for (const auto& step : attempt.steps) {
            const std::string n = std::to_string(step.step_index);
            out += "Sub-question #" + n + ": " + step.record.sub_question.template_text + "\n";
            out += "Rewritten #" + n + ": " + step.constructed_query + "\n";
            out += "Reasoning #" + n + ": " + step.record.reasoning + "\n";
            out += "Answer #" + n + ": " + step.record.answer.text + "\n";
        }
        out += "Final answer: " + attempt.final.text + "\n";
        out += "Verified: " + std::string(attempt.verdict.accepted ? "true" : "false") + "\n";
    }
    return out;
}

}  // namespace

AnalysisResult ReasoningModules::improve_analysis(const Question& q,
                                                  const PipelineTrace& record,
                                                  CallLog& log) const {
    if (record.attempts.empty())
        throw PreconditionError("improve_analysis: record has no attempts");
    if (record.attempts.back().verdict.accepted)
        throw PreconditionError("improve_analysis: last attempt was accepted");
    std::map<std::string, std::string> bindings = {
        {"Question", q.text},
        {"Sub-questions Solving Record", format_solving_record(record)},
    };
    return call("improve_analysis", bindings, log, [&](const std::string& out) {
        auto fields = parse_fields(out, {"Analysis"});
        AnalysisResult res;
        res.text = fields.at("Analysis");
        res.decomposition_appropriate =
            text::starts_with(text::trim(res.text), kDecompositionAppropriateSentinel);
        return res;
    });
}

ImprovedPlan ReasoningModules::improve_decomposition(const Question& q,
                                                     const std::vector<PriorPlan>& prior,
                                                     CallLog& log) const {
    if (prior.empty()) throw PreconditionError("improve_decomposition: no prior plans");

    std::string serialized;
    for (size_t i = 0; i < prior.size(); ++i) {
        serialized += "Incorrect decomposition " + std::to_string(i + 1) + ":\n";
        serialized += format_plan_lines(prior[i].plan);
        serialized += "New decomposition instructions " + std::to_string(i + 1) + ":\n";
        serialized += prior[i].analysis + "\n";
    }
    std::map<std::string, std::string> bindings = {
        {"Question", q.text},
        {"Previous Decompositions", serialized},
    };

    int next_generation = 0;
    for (const auto& p : prior) next_generation = std::max(next_generation, p.plan.generation);
    ++next_generation;

    auto attempt = [&]() {
        return call("improve_decomposition", bindings, log, [&](const std::string& out) {
            auto fields = parse_fields(out, {"Reasoning", "New Decomposition"});
            DecompositionPlan plan;
            plan.original = q;
            plan.reasoning = fields.at("Reasoning");
            plan.subs = parse_plan_output(fields.at("New Decomposition"));
            plan.generation = next_generation;
            return plan;
        });
    };
    auto repeats = [&](const DecompositionPlan& plan) {
        return std::any_of(prior.begin(), prior.end(), [&](const PriorPlan& p) {
            return plan.same_breakdown(p.plan);
        });
    };

    ImprovedPlan result{attempt(), false};
    if (repeats(result.plan) &&
        models_.for_module("improve_decomposition").backend == BackendKind::http) {
        result.plan = attempt();
    }
    result.repeat_of_prior = repeats(result.plan);
    return result;
}

bool ReasoningModules::llm_eval(const Question& q, const std::string& prediction,
                                const std::vector<std::string>& gold, CallLog& log) const {
    if (gold.empty()) throw PreconditionError("llm_eval: gold answers are empty");
    std::map<std::string, std::string> bindings = {
        {"Question", q.text},
        {"Ground Truth Answer", nlohmann::json(gold).dump()},
        {"Our Answer", prediction},
    };
    return call("llm_evaluation", bindings, log, [&](const std::string& out) {
        auto fields = parse_fields(out, {"Reasoning", "Output"});
        return parse_bool_output(fields.at("Output"));
    });
}

}  // namespace hopqa
