#include "hopqa/core.hpp"

#include <algorithm>
#include <map>

#include "hopqa/text.hpp"

namespace hopqa {

void Question::validate() const {
    if (text::trim(text).empty()) throw InvariantViolation("question text is empty");
}

void SubQuestion::validate() const {
    if (index < 1) throw InvariantViolation("sub-question index must be >= 1");
    for (int k : placeholder_indices(template_text)) {
        if (k >= index) throw ForwardReference(k);
        if (k < 1) throw InvariantViolation("placeholder index must be >= 1");
    }
    if (resolved_text && has_placeholder(*resolved_text))
        throw InvariantViolation("resolved text still contains a placeholder");
}

void DecompositionPlan::validate() const {
    original.validate();
    for (size_t i = 0; i < subs.size(); ++i) {
        if (subs[i].index != static_cast<int>(i) + 1)
            throw InvariantViolation("sub-question indices must be contiguous 1..n");
        subs[i].validate();
    }
}

bool DecompositionPlan::same_breakdown(const DecompositionPlan& other) const {
    if (subs.size() != other.subs.size()) return false;
    for (size_t i = 0; i < subs.size(); ++i)
        if (text::trim(subs[i].template_text) != text::trim(other.subs[i].template_text))
            return false;
    return true;
}

CitedAnswer CitedAnswer::abstention() {
    CitedAnswer a;
    a.text = kAbstentionSentinel;
    a.is_abstention = true;
    return a;
}

void CitedAnswer::validate() const {
    bool sentinel = text::trim(text) == kAbstentionSentinel;
    if (is_abstention != sentinel)
        throw InvariantViolation("is_abstention must mirror the sentinel text");
    if (is_abstention && !citations.empty())
        throw InvariantViolation("abstention answers carry no citations");
}

void QARecord::validate() const {
    if (!sub_question.resolved_text)
        throw InvariantViolation("history records require a resolved sub-question");
}

void Verdict::validate() const {
    if (!accepted && text::trim(reason).empty())
        throw InvariantViolation("rejected verdicts must state a reason");
}

const char* route_name(Route r) {
    switch (r) {
        case Route::simple: return "simple";
        case Route::multihop: return "multihop";
        case Route::simple_escalated: return "simple_escalated";
    }
    return "multihop";
}

Route route_from_name(const std::string& name) {
    if (name == "simple") return Route::simple;
    if (name == "simple_escalated") return Route::simple_escalated;
    if (name == "multihop") return Route::multihop;
    throw InvariantViolation("unknown route \"" + name + "\"");
}

namespace {

// Calls fn(start, end, k) for every `#<digits>` token in text, where
// [start, end) spans the whole token including '#'.
template <typename Fn>
void scan_placeholders(std::string_view text, Fn&& fn) {
    size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '#') {
            ++i;
            continue;
        }
        size_t j = i + 1;
        while (j < text.size() && text[j] >= '0' && text[j] <= '9') ++j;
        if (j > i + 1) {
            int k = 0;
            bool overflow = j - i - 1 > 9;
            if (!overflow)
                for (size_t p = i + 1; p < j; ++p) k = k * 10 + (text[p] - '0');
            fn(i, j, overflow ? -1 : k);
        }
        i = j > i + 1 ? j : i + 1;
    }
}

}  // namespace

bool has_placeholder(std::string_view text) {
    bool found = false;
    scan_placeholders(text, [&](size_t, size_t, int) { found = true; });
    return found;
}

std::vector<int> placeholder_indices(std::string_view text) {
    std::vector<int> out;
    scan_placeholders(text, [&](size_t, size_t, int k) { out.push_back(k); });
    return out;
}

std::string substitute_placeholders(const SubQuestion& sub,
                                    const std::vector<QARecord>& history) {
    std::map<int, const QARecord*> by_index;
    for (const auto& rec : history) by_index[rec.sub_question.index] = &rec;

    struct Hit {
        size_t start, end;
        int k;
    };
    std::vector<Hit> hits;
    scan_placeholders(sub.template_text, [&](size_t s, size_t e, int k) {
        hits.push_back({s, e, k});
    });

    for (const auto& h : hits) {
        if (h.k < 0 || h.k >= sub.index) throw ForwardReference(h.k);
        if (!by_index.count(h.k)) throw MissingAntecedent(h.k);
    }

    std::string out;
    out.reserve(sub.template_text.size());
    size_t pos = 0;
    for (const auto& h : hits) {
        out.append(sub.template_text, pos, h.start - pos);
        out.append(by_index.at(h.k)->answer.text);
        pos = h.end;
    }
    out.append(sub.template_text, pos, std::string::npos);
    return out;
}

CitedAnswer extract_citations(const std::string& raw_answer) {
    CitedAnswer answer;
    answer.text = raw_answer;
    answer.is_abstention = text::trim(raw_answer) == kAbstentionSentinel;
    if (answer.is_abstention) return answer;

    size_t i = 0;
    while (i < raw_answer.size()) {
        if (raw_answer[i] != '[') {
            ++i;
            continue;
        }
        size_t j = i + 1;
        while (j < raw_answer.size() && raw_answer[j] >= '0' && raw_answer[j] <= '9') ++j;
        if (j > i + 1 && j < raw_answer.size() && raw_answer[j] == ']' && j - i - 1 <= 9) {
            int n = 0;
            for (size_t p = i + 1; p < j; ++p) n = n * 10 + (raw_answer[p] - '0');
            answer.citations.insert(n);
            i = j + 1;
        } else {
            ++i;  // malformed bracket contents are skipped, not errors
        }
    }
    return answer;
}

}  // namespace hopqa
