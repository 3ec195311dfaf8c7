#include "hopqa/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include "hopqa/text.hpp"

namespace hopqa {

void PipelineConfig::validate() const {
    if (enable.qd != enable.qc)
        throw ConfigError("QD and QC are coupled: enable or disable them together");
    if (enable.qr && !enable.av)
        throw ConfigError("QR requires AV: query rewriting runs on verification failures");
    if (max_reflections < 0) throw ConfigError("max_reflections must be >= 0");
    if (per_step_retries < 0) throw ConfigError("per_step_retries must be >= 0");
    if (parallel < 1) throw ConfigError("parallel must be >= 1");
    if (templates_dir.empty()) throw ConfigError("templates_dir must be set");
    models.default_spec().validate();
    for (const auto& [name, spec] : models.overrides()) {
        bool known = std::find(TemplateSet::known_names().begin(),
                               TemplateSet::known_names().end(),
                               name) != TemplateSet::known_names().end();
        if (!known) throw ConfigError("unknown module \"" + name + "\" in per-module models");
        spec.validate();
    }
    judge.validate();
    retrieval.validate();
}

bool PipelineConfig::fully_scripted() const {
    if (models.default_spec().backend != BackendKind::scripted) return false;
    for (const auto& [name, spec] : models.overrides())
        if (spec.backend != BackendKind::scripted) return false;
    return judge.backend == BackendKind::scripted;
}

Engine::Engine(const PipelineConfig& cfg, Gateway& gateway, const TemplateSet& templates,
               const Retriever& retriever)
    : cfg_(cfg), retriever_(retriever), modules_(gateway, templates, cfg.models) {
    cfg_.validate();
}

std::vector<Passage> Engine::retrieve_batch(const std::string& query) const {
    auto batch = retriever_.retrieve(query, cfg_.retrieval.top_k);
    return truncate_to_budget(std::move(batch), cfg_.retrieval.passage_char_budget);
}

namespace {

// Passages from `batch` carrying the answer's citations; the whole batch
// when the answer cites nothing.
std::vector<Passage> cited_subset(const CitedAnswer& answer, const std::vector<Passage>& batch) {
    if (answer.citations.empty()) return batch;
    std::vector<Passage> cited;
    for (const auto& p : batch)
        if (answer.citations.count(p.local_id)) cited.push_back(p);
    return cited.empty() ? batch : cited;
}

DecompositionPlan empty_plan(const Question& q, int generation) {
    DecompositionPlan plan;
    plan.original = q;
    plan.generation = generation;
    return plan;
}

}  // namespace

Attempt Engine::run_simple(const Question& q, CallLog& log) const {
    Attempt attempt;
    attempt.plan = empty_plan(q, 0);

    StepTrace st;
    st.step_index = 1;
    st.constructed_query = q.text;
    st.retrieval_needed = true;
    st.retrieved = retrieve_batch(q.text);

    auto ans = modules_.answer(q.text, st.retrieved, "none", log);
    st.record.sub_question = SubQuestion{1, q.text, q.text};
    st.record.reasoning = ans.reasoning;
    st.record.answer = ans.answer;
    st.step_verdict = modules_.verify(q.text, ans.answer, cited_subset(ans.answer, st.retrieved), log);

    attempt.final = ans.answer;
    attempt.verdict = st.step_verdict;
    attempt.steps.push_back(std::move(st));
    return attempt;
}

Engine::StepOutcome Engine::run_step(const Question& q, const SubQuestion& sub,
                                     const std::vector<QARecord>& history, bool single_step,
                                     CallLog& log) const {
    StepTrace st;
    st.step_index = sub.index;

    std::string resolved;
    if (single_step) {
        resolved = q.text;
    } else if (cfg_.enable.qc) {
        resolved = modules_.construct(q, history, sub, log).text;
    } else {
        resolved = substitute_placeholders(sub, history);
    }
    st.constructed_query = resolved;

    if (cfg_.enable.rd) {
        st.retrieval_needed = modules_.decide_retrieval(resolved, log).needed;
    } else {
        st.retrieval_needed = true;  // RD disabled: always retrieve
    }

    const std::string background = single_step ? "none" : format_history(history);
    std::string current_query = resolved;
    std::optional<std::string> last_query;
    AnswerResult ans;
    Verdict verdict{true, ""};

    for (int try_idx = 0;; ++try_idx) {
        std::vector<Passage> working;
        if (st.retrieval_needed) {
            if (try_idx > 0) {
                std::string rewritten = modules_.rewrite_query(resolved, last_query, log);
                st.rewrites.push_back(rewritten);
                current_query = rewritten;
            }
            st.retrieved = retrieve_batch(current_query);
            st.reranked_order.clear();
            working = st.retrieved;
            if (cfg_.enable.pr && !st.retrieved.empty()) {
                auto rr = modules_.rerank(current_query, st.retrieved, log);
                st.reranked_order = rr.order;
                working = apply_order(st.retrieved, rr.order);
            }
        }

        ans = modules_.answer(resolved, working, background, log);
        if (cfg_.enable.av) {
            verdict = modules_.verify(resolved, ans.answer, cited_subset(ans.answer, working), log);
        } else {
            verdict = Verdict{true, ""};
        }
        if (verdict.accepted) break;

        const bool can_retry =
            cfg_.enable.qr && st.retrieval_needed && try_idx < cfg_.per_step_retries;
        if (!can_retry) break;
        last_query = current_query;
        ++st.retries_used;
    }

    QARecord record;
    record.sub_question = sub;
    record.sub_question.resolved_text = resolved;
    record.reasoning = ans.reasoning;
    // a step that stays unverified contributes an abstention, not a claim
    record.answer = verdict.accepted || !cfg_.enable.av ? ans.answer : CitedAnswer::abstention();

    st.record = record;
    st.step_verdict = verdict;
    return {std::move(st), std::move(record)};
}

Attempt Engine::run_multihop(const Question& q, const DecompositionPlan& plan,
                             CallLog& log) const {
    Attempt attempt;
    attempt.plan = plan;

    const bool single_step = plan.subs.empty();
    std::vector<SubQuestion> subs = plan.subs;
    if (single_step) subs.push_back(SubQuestion{1, q.text, {}});

    std::vector<QARecord> history;
    for (const auto& sub : subs) {
        auto outcome = run_step(q, sub, history, single_step, log);
        history.push_back(outcome.record);
        attempt.steps.push_back(std::move(outcome.trace));
    }

    if (single_step) {
        attempt.final = attempt.steps.front().record.answer;  // finalize skipped
    } else {
        attempt.final = modules_.finalize(q, history, log).answer;
    }
    return attempt;
}

std::vector<Passage> Engine::final_verification_passages(const Attempt& attempt) const {
    // union of passages cited by each step's accepted answer, renumbered
    std::vector<Passage> out;
    std::set<std::string> seen;
    for (const auto& step : attempt.steps) {
        if (!step.step_verdict.accepted) continue;
        for (int id : step.record.answer.citations) {
            for (const auto& p : step.retrieved) {
                if (p.local_id != id) continue;
                if (seen.insert(p.doc_id).second) {
                    Passage copy = p;
                    copy.local_id = static_cast<int>(out.size()) + 1;
                    out.push_back(std::move(copy));
                }
                break;
            }
        }
    }
    return out;
}

PipelineTrace Engine::solve(const Question& q) const {
    const bool deterministic = cfg_.fully_scripted();
    const auto started = std::chrono::steady_clock::now();

    PipelineTrace trace;
    trace.question = q;
    trace.route = cfg_.enable.simple_qa ? Route::simple : Route::multihop;

    CallLog log;
    try {
        q.validate();
        bool answered = false;

        if (cfg_.enable.simple_qa) {
            Attempt simple = run_simple(q, log);
            trace.simple_attempt = simple;
            if (simple.verdict.accepted) {
                trace.final = simple.final;
                trace.final_verdict = simple.verdict;
                answered = true;
            } else {
                trace.route = Route::simple_escalated;
            }
        }

        if (!answered) {
            std::vector<PriorPlan> prior;
            std::optional<DecompositionPlan> next_plan;

            for (int attempt_idx = 0; attempt_idx <= cfg_.max_reflections; ++attempt_idx) {
                DecompositionPlan plan;
                if (next_plan) {
                    plan = *next_plan;
                } else if (cfg_.enable.qd) {
                    plan = modules_.decompose(q, log);
                } else {
                    plan = empty_plan(q, 0);
                }
                plan.generation = attempt_idx;

                Attempt attempt = run_multihop(q, plan, log);
                if (cfg_.enable.av) {
                    attempt.verdict = modules_.verify_final(
                        q.text, attempt.final, final_verification_passages(attempt), log);
                } else {
                    attempt.verdict = Verdict{true, ""};
                }
                trace.attempts.push_back(attempt);
                trace.final = attempt.final;
                trace.final_verdict = attempt.verdict;

                if (attempt.verdict.accepted) {
                    trace.final_unverified = !cfg_.enable.av;
                    break;  // answer is correct; stop early
                }
                if (attempt_idx == cfg_.max_reflections) {
                    trace.final_unverified = true;  // budget exhausted
                    break;
                }

                auto analysis = modules_.improve_analysis(q, trace, log);
                prior.push_back({attempt.plan, analysis.text});
                if (analysis.decomposition_appropriate) {
                    // rerun the same breakdown with fresh retrieval
                    next_plan = attempt.plan;
                    next_plan->generation = attempt_idx + 1;
                } else {
                    next_plan = modules_.improve_decomposition(q, prior, log).plan;
                }
            }
        }
    } catch (const Error& e) {
        trace.error = e.what();
        trace.final = CitedAnswer::abstention();
        trace.final_verdict = Verdict{false, std::string("unrecoverable error: ") + e.what()};
        trace.final_unverified = true;
    }

    trace.module_calls = log.calls();
    trace.token_usage = log.total_tokens();
    trace.token_usage_approx = log.any_approx();
    trace.wall_time =
        deterministic
            ? 0.0
            : std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return trace;
}

}  // namespace hopqa
