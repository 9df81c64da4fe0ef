#pragma once

#include <optional>
#include <string>
#include <vector>

#include "contam/ingest.hpp"

namespace contam {

enum class Method { loss, zlib, mink, minkpp, maxk, ref, lira, neighbor, cdd, verbatim };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

enum class Orientation { higher_is_member, lower_is_member };

// Default AUROC orientation per method. LiRA divides two negative
// numbers, so a more confident target pushes the ratio down; every
// other score rises with member-like confidence.
Orientation default_orientation(Method m);

struct DetectorConfig {
    Method method = Method::loss;
    double k_percent = 20.0;  // in (0, 100]
    double alpha = 0.5;       // in [0, 1]
    SpanKind span = SpanKind::response;
    std::optional<Orientation> orientation;  // defaulted per method when unset

    Orientation effective_orientation() const {
        return orientation ? *orientation : default_orientation(method);
    }
};

struct QuestionScore {
    std::string question_id;
    std::string benchmark;
    Membership membership = Membership::nonmember;
    std::string stage;
    Method method = Method::loss;
    SpanKind span = SpanKind::response;
    double value = 0.0;  // mean of per-rollout scores
    int n_rollouts = 0;
};

// --- per-rollout scores -------------------------------------------------

double score_loss(const std::vector<TokenScore>& tokens);
double score_mink(const std::vector<TokenScore>& tokens, double k_percent);
double score_maxk(const std::vector<TokenScore>& tokens, double k_percent);
double score_minkpp(const std::vector<TokenScore>& tokens, double k_percent);
double score_zlib(const std::vector<TokenScore>& tokens, const std::string& response_text);
double score_ref(const std::vector<TokenScore>& tokens, const std::vector<double>& ref_logprobs);
double score_lira(const std::vector<TokenScore>& tokens, const std::vector<double>& ref_logprobs);
double score_neighbor(const std::vector<TokenScore>& tokens,
                      const std::vector<double>& neighbor_phis);

// DEFLATE-compressed byte length of the UTF-8 text, zlib stream
// framing, compression level 6. The Zlib detector denominator.
std::size_t zlib_compressed_size(const std::string& text);

// --- text distances -----------------------------------------------------

// Levenshtein distance with unit insert/delete/substitute costs.
int edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);

int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Token units for CDD: token texts when every token carries one,
// otherwise Unicode code points of the rollout text.
std::vector<std::string> cdd_units(const Rollout& rollout);

// --- question-level scores ----------------------------------------------

// Cumulative edit-distance mass of sampled rollouts around the greedy
// one, within the alpha * max-length window. Value in [0, 1].
double score_cdd(const QuestionRecord& record, double alpha);

// ROUGE-L F1 between generated continuation and reference suffix over
// whitespace tokens. Value in [0, 1].
double score_verbatim(const VerbatimPayload& payload);

double aggregate_question(const std::vector<double>& per_rollout_scores);

// Scores one question with one detector; averages per-rollout scores
// for probability-based methods. Throws MissingDataError /
// EmptySpanError when the record lacks what the method needs.
QuestionScore score_question(const QuestionRecord& record, const DetectorConfig& config);

}  // namespace contam
