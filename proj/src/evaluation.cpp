#include "hopqa/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "hopqa/text.hpp"

namespace hopqa {

std::vector<std::string> normalize(const std::string& s) { return text::normalize_tokens(s); }

bool contiguous_subsequence(const std::vector<std::string>& needle,
                            const std::vector<std::string>& haystack) {
    if (needle.empty()) return false;  // vacuous matches are rejected upstream
    if (needle.size() > haystack.size()) return false;
    return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
           haystack.end();
}

int cover_em(const std::string& prediction, const std::vector<std::string>& gold) {
    if (gold.empty()) throw EmptyGold();
    auto pred_tokens = normalize(prediction);
    bool any_usable = false;
    for (const auto& g : gold) {
        auto gold_tokens = normalize(g);
        if (gold_tokens.empty()) continue;  // normalizes to nothing, cannot match
        any_usable = true;
        if (contiguous_subsequence(gold_tokens, pred_tokens)) return 1;
    }
    if (!any_usable) throw EmptyGold();
    return 0;
}

MetricsRow aggregate(const std::vector<PipelineTrace>& traces,
                     const std::vector<Judgment>& judgments,
                     const std::string& config_label) {
    if (traces.empty()) throw PreconditionError("aggregate: no traces");
    std::map<std::string, const Judgment*> by_id;
    for (const auto& j : judgments) by_id[j.question_id] = &j;

    MetricsRow row;
    row.config_label = config_label;
    row.n = static_cast<int>(traces.size());
    for (const auto& t : traces) {
        auto it = by_id.find(t.question.id);
        if (it == by_id.end()) throw MissingJudgment(t.question.id);
        row.cover_em += it->second->cover_em;
        row.llm_eval += it->second->llm_eval;
        row.avg_tokens += static_cast<double>(t.token_usage);
        row.avg_wall_time += t.wall_time;
    }
    row.cover_em /= row.n;
    row.llm_eval /= row.n;
    row.avg_tokens /= row.n;
    row.avg_wall_time /= row.n;
    row.avg = (row.cover_em + row.llm_eval) / 2.0;
    return row;
}

namespace {

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

const MetricsRow* find_baseline(const std::vector<MetricsRow>& rows, const std::string& label) {
    for (const auto& r : rows)
        if (r.config_label == label) return &r;
    return nullptr;
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsRow>& rows, const std::string& baseline_label) {
    const MetricsRow* base = find_baseline(rows, baseline_label);
    std::string out =
        "config,n,cover_em,llm_eval,avg,avg_tokens,avg_wall_time,delta_cover_em,delta_llm_eval\n";
    for (const auto& r : rows) {
        out += r.config_label + "," + std::to_string(r.n) + "," + fmt(r.cover_em) + "," +
               fmt(r.llm_eval) + "," + fmt(r.avg) + "," + fmt(r.avg_tokens, 1) + "," +
               fmt(r.avg_wall_time, 3);
        if (base) {
            out += "," + fmt(r.cover_em - base->cover_em) + "," + fmt(r.llm_eval - base->llm_eval);
        } else {
            out += ",,";
        }
        out += "\n";
    }
    return out;
}

std::string metrics_table(const std::vector<MetricsRow>& rows, const std::string& baseline_label) {
    const MetricsRow* base = find_baseline(rows, baseline_label);
    size_t label_w = 6;
    for (const auto& r : rows) label_w = std::max(label_w, r.config_label.size());

    std::ostringstream out;
    auto pad = [&](const std::string& s, size_t w) {
        out << s;
        for (size_t i = s.size(); i < w + 2; ++i) out << ' ';
    };
    pad("config", label_w);
    for (const char* h : {"n", "Cover-EM", "LLM Eval", "Avg", "Avg Tokens", "dCover", "dLLM"})
        pad(h, 10);
    out << "\n";
    for (const auto& r : rows) {
        pad(r.config_label, label_w);
        pad(std::to_string(r.n), 10);
        pad(fmt(r.cover_em, 3), 10);
        pad(fmt(r.llm_eval, 3), 10);
        pad(fmt(r.avg, 3), 10);
        pad(fmt(r.avg_tokens, 1), 10);
        if (base) {
            pad(fmt(r.cover_em - base->cover_em, 3), 10);
            pad(fmt(r.llm_eval - base->llm_eval, 3), 10);
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace hopqa
