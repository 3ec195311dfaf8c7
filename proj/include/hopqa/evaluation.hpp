#pragma once
// Deterministic Cover-EM metric and aggregation into report rows.

#include <string>
#include <vector>

#include "hopqa/core.hpp"

namespace hopqa {

// Lowercases, removes punctuation, trims whitespace, tokenizes.
// Punctuation is deleted (not replaced by a space): "U.S.A." -> [usa].
std::vector<std::string> normalize(const std::string& s);

// True when `needle` occurs as a contiguous subsequence of `haystack`.
bool contiguous_subsequence(const std::vector<std::string>& needle,
                            const std::vector<std::string>& haystack);

// 1 iff some normalized gold answer is a contiguous token subsequence of
// the normalized prediction. Gold entries that normalize to nothing can
// never match; if every entry does, EmptyGold is thrown.
int cover_em(const std::string& prediction, const std::vector<std::string>& gold);

struct MetricsRow {
    std::string config_label;
    double cover_em = 0.0;
    double llm_eval = 0.0;
    double avg = 0.0;  // (cover_em + llm_eval) / 2
    double avg_tokens = 0.0;
    double avg_wall_time = 0.0;
    int n = 0;
};

struct Judgment {
    std::string question_id;
    int cover_em = 0;   // 0/1
    int llm_eval = 0;   // 0/1
};

// Means over the dataset; every trace needs a matching judgment, otherwise
// MissingJudgment names the first uncovered question.
MetricsRow aggregate(const std::vector<PipelineTrace>& traces,
                     const std::vector<Judgment>& judgments,
                     const std::string& config_label);

std::string metrics_csv(const std::vector<MetricsRow>& rows, const std::string& baseline_label);
std::string metrics_table(const std::vector<MetricsRow>& rows, const std::string& baseline_label);

}  // namespace hopqa
