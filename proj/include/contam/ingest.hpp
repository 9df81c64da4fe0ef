#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "contam/errors.hpp"

namespace contam {

enum class Membership { member, nonmember };

std::string to_string(Membership m);
Membership membership_from_string(const std::string& s);

// One scored token of a model response. Log-probs are in nats.
// vocab_mean / vocab_std are the per-position vocabulary statistics
// needed by Min-K%++ (mean and std of next-token log-prob over the
// vocabulary at this position).
struct TokenScore {
    std::optional<std::string> text;
    double logprob = 0.0;
    std::optional<double> vocab_mean;
    std::optional<double> vocab_std;
};

// Prefix-completion payload for the verbatim detector: the model was
// given prefix_ratio of the question and asked to continue; the
// reference suffix is the withheld remainder.
struct VerbatimPayload {
    double prefix_ratio = 0.8;
    std::string generated_continuation;
    std::string reference_suffix;
};

struct Rollout {
    std::string text;
    std::vector<TokenScore> tokens;
    bool is_greedy = false;
    std::optional<std::vector<double>> ref_logprobs;   // reference model, aligned with tokens
    std::optional<std::vector<double>> neighbor_phis;  // avg log-prob under rephrased questions
    std::optional<bool> correct;
};

struct QuestionRecord {
    std::string question_id;
    std::string benchmark;
    Membership membership = Membership::nonmember;
    std::string question_text;
    std::optional<std::string> stage;
    std::optional<VerbatimPayload> verbatim;
    std::optional<std::vector<TokenScore>> question_tokens;
    std::vector<Rollout> rollouts;
};

// Token span a detector scores over. The default is the full response.
// think_only / post_think split on the literal <think>...</think>
// markers in the rollout text, mapped to token indices by cumulative
// concatenation of token texts.
enum class SpanKind { response, question, question_plus_response, think_only, post_think };

std::string to_string(SpanKind k);
SpanKind span_from_string(const std::string& s);

// Parses a line-delimited record file. Throws ParseError on malformed
// lines (carrying the line number) and on duplicate question ids.
std::vector<QuestionRecord> parse_records(const std::string& path);
std::vector<QuestionRecord> parse_records(std::istream& in);

// Inverse of parse_records on valid inputs, field for field.
std::string serialize_records(const std::vector<QuestionRecord>& records);

// Returns one human-readable violation per broken invariant; empty
// means the record is valid. Violations are data, not failures.
std::vector<std::string> validate_record(const QuestionRecord& record);

// Token subsequence a detector scores over.
std::vector<TokenScore> select_span(const QuestionRecord& record,
                                    const Rollout& rollout, SpanKind span);

// phi: length-normalized log-likelihood, the base statistic.
double avg_logprob(const std::vector<TokenScore>& tokens);

}  // namespace contam
