#include "contam/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <zlib.h>

namespace contam {

std::string to_string(Method m) {
    switch (m) {
        case Method::loss: return "loss";
        case Method::zlib: return "zlib";
        case Method::mink: return "mink";
        case Method::minkpp: return "minkpp";
        case Method::maxk: return "maxk";
        case Method::ref: return "ref";
        case Method::lira: return "lira";
        case Method::neighbor: return "neighbor";
        case Method::cdd: return "cdd";
        case Method::verbatim: return "verbatim";
    }
    return "loss";
}

Method method_from_string(const std::string& s) {
    for (Method m : {Method::loss, Method::zlib, Method::mink, Method::minkpp, Method::maxk,
                     Method::ref, Method::lira, Method::neighbor, Method::cdd, Method::verbatim})
        if (to_string(m) == s) return m;
    throw Error("unknown method \"" + s + "\"");
}

Orientation default_orientation(Method m) {
    return m == Method::lira ? Orientation::lower_is_member : Orientation::higher_is_member;
}

namespace {

constexpr double kSigmaFloor = 1e-12;

void require_nonempty(const std::vector<TokenScore>& tokens) {
    if (tokens.empty()) throw EmptySpanError("detector called on an empty span");
}

// Number of selected tokens for the K% family.
std::size_t select_count(double k_percent, std::size_t n) {
    if (k_percent <= 0.0 || k_percent > 100.0)
        throw Error("k_percent must lie in (0, 100]");
    const auto m = static_cast<std::size_t>(std::floor(k_percent / 100.0 * static_cast<double>(n)));
    return std::max<std::size_t>(1, std::min(m, n));
}

// Mean of the m smallest values; ties resolved by earlier index.
double mean_of_extreme(std::vector<double> values, std::size_t m, bool lowest) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return lowest ? values[a] < values[b] : values[a] > values[b];
    });
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum += values[idx[i]];
    return sum / static_cast<double>(m);
}

}  // namespace

double score_loss(const std::vector<TokenScore>& tokens) { return avg_logprob(tokens); }

double score_mink(const std::vector<TokenScore>& tokens, double k_percent) {
    require_nonempty(tokens);
    std::vector<double> lps;
    lps.reserve(tokens.size());
    for (const TokenScore& t : tokens) lps.push_back(t.logprob);
    return mean_of_extreme(std::move(lps), select_count(k_percent, tokens.size()), true);
}

double score_maxk(const std::vector<TokenScore>& tokens, double k_percent) {
    require_nonempty(tokens);
    std::vector<double> lps;
    lps.reserve(tokens.size());
    for (const TokenScore& t : tokens) lps.push_back(t.logprob);
    return mean_of_extreme(std::move(lps), select_count(k_percent, tokens.size()), false);
}

double score_minkpp(const std::vector<TokenScore>& tokens, double k_percent) {
    require_nonempty(tokens);
    std::vector<double> scores;
    scores.reserve(tokens.size());
    for (const TokenScore& t : tokens) {
        if (!t.vocab_mean || !t.vocab_std)
            throw MissingDataError("minkpp needs vocab mean/std on every token");
        // A zero-variance vocabulary row forces logprob == mean.
        scores.push_back(*t.vocab_std < kSigmaFloor ? 0.0
                                                    : (t.logprob - *t.vocab_mean) / *t.vocab_std);
    }
    return mean_of_extreme(std::move(scores), select_count(k_percent, tokens.size()), true);
}

std::size_t zlib_compressed_size(const std::string& text) {
    uLongf bound = compressBound(static_cast<uLong>(text.size()));
    std::vector<Bytef> buf(bound);
    const int rc = compress2(buf.data(), &bound, reinterpret_cast<const Bytef*>(text.data()),
                             static_cast<uLong>(text.size()), 6);
    if (rc != Z_OK) throw Error("zlib compression failed");
    return static_cast<std::size_t>(bound);
}

double score_zlib(const std::vector<TokenScore>& tokens, const std::string& response_text) {
    require_nonempty(tokens);
    if (response_text.empty()) throw EmptySpanError("zlib detector on empty response text");
    return avg_logprob(tokens) / static_cast<double>(zlib_compressed_size(response_text));
}

namespace {

double ref_phi(const std::vector<TokenScore>& tokens, const std::vector<double>& ref_logprobs) {
    require_nonempty(tokens);
    if (ref_logprobs.size() != tokens.size())
        throw MissingDataError("reference log-probs not aligned with span (" +
                               std::to_string(ref_logprobs.size()) + " vs " +
                               std::to_string(tokens.size()) + ")");
    const double sum = std::accumulate(ref_logprobs.begin(), ref_logprobs.end(), 0.0);
    return sum / static_cast<double>(ref_logprobs.size());
}

}  // namespace

double score_ref(const std::vector<TokenScore>& tokens, const std::vector<double>& ref_logprobs) {
    return avg_logprob(tokens) - ref_phi(tokens, ref_logprobs);
}

double score_lira(const std::vector<TokenScore>& tokens, const std::vector<double>& ref_logprobs) {
    const double phi_ref = ref_phi(tokens, ref_logprobs);
    if (phi_ref == 0.0) throw Error("lira: reference avg log-prob is zero");
    return avg_logprob(tokens) / phi_ref;
}

double score_neighbor(const std::vector<TokenScore>& tokens,
                      const std::vector<double>& neighbor_phis) {
    require_nonempty(tokens);
    if (neighbor_phis.empty()) throw MissingDataError("neighbor detector without neighbor phis");
    const double mean =
        std::accumulate(neighbor_phis.begin(), neighbor_phis.end(), 0.0) /
        static_cast<double>(neighbor_phis.size());
    return avg_logprob(tokens) - mean;
}

int edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<int> prev(m + 1), cur(m + 1);
    std::iota(prev.begin(), prev.end(), 0);
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= m; ++j) {
            const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<int> prev(m + 1, 0), cur(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[m];
}

namespace {

std::vector<std::string> utf8_codepoints(const std::string& s) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < s.size();) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        if (c >= 0xF0) len = 4;
        else if (c >= 0xE0) len = 3;
        else if (c >= 0xC0) len = 2;
        len = std::min(len, s.size() - i);
        out.push_back(s.substr(i, len));
        i += len;
    }
    return out;
}

std::vector<std::string> whitespace_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

}  // namespace

std::vector<std::string> cdd_units(const Rollout& rollout) {
    const bool all_texts = !rollout.tokens.empty() &&
                           std::all_of(rollout.tokens.begin(), rollout.tokens.end(),
                                       [](const TokenScore& t) { return t.text.has_value(); });
    if (all_texts) {
        std::vector<std::string> out;
        out.reserve(rollout.tokens.size());
        for (const TokenScore& t : rollout.tokens) out.push_back(*t.text);
        return out;
    }
    return utf8_codepoints(rollout.text);
}

double score_cdd(const QuestionRecord& record, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw Error("alpha must lie in [0, 1]");
    const Rollout* greedy = nullptr;
    std::vector<const Rollout*> sampled;
    for (const Rollout& r : record.rollouts) {
        if (r.is_greedy) greedy = &r;
        else sampled.push_back(&r);
    }
    if (!greedy)
        throw MissingDataError("cdd needs a greedy (temperature-0) rollout on " + record.question_id);
    if (sampled.empty())
        throw MissingDataError("cdd needs at least one sampled rollout on " + record.question_id);

    const std::vector<std::string> greedy_units = cdd_units(*greedy);
    std::size_t max_len = 0;
    std::vector<int> distances;
    distances.reserve(sampled.size());
    for (const Rollout* r : sampled) {
        const std::vector<std::string> units = cdd_units(*r);
        max_len = std::max(max_len, units.size());
        distances.push_back(edit_distance(units, greedy_units));
    }
    const double threshold = std::floor(alpha * static_cast<double>(max_len));
    const auto within = std::count_if(distances.begin(), distances.end(),
                                      [&](int d) { return static_cast<double>(d) <= threshold; });
    return static_cast<double>(within) / static_cast<double>(distances.size());
}

double score_verbatim(const VerbatimPayload& payload) {
    const std::vector<std::string> ref = whitespace_tokens(payload.reference_suffix);
    if (ref.empty()) throw MissingDataError("verbatim with empty reference suffix");
    const std::vector<std::string> gen = whitespace_tokens(payload.generated_continuation);
    const int L = lcs_length(gen, ref);
    if (L == 0) return 0.0;
    const double precision = static_cast<double>(L) / static_cast<double>(gen.size());
    const double recall = static_cast<double>(L) / static_cast<double>(ref.size());
    return 2.0 * precision * recall / (precision + recall);
}

double aggregate_question(const std::vector<double>& per_rollout_scores) {
    if (per_rollout_scores.empty()) throw EmptySpanError("aggregate over zero rollout scores");
    return std::accumulate(per_rollout_scores.begin(), per_rollout_scores.end(), 0.0) /
           static_cast<double>(per_rollout_scores.size());
}

QuestionScore score_question(const QuestionRecord& record, const DetectorConfig& config) {
    QuestionScore qs;
    qs.question_id = record.question_id;
    qs.benchmark = record.benchmark;
    qs.membership = record.membership;
    qs.stage = record.stage.value_or("");
    qs.method = config.method;
    qs.span = config.span;

    if (config.method == Method::verbatim) {
        if (!record.verbatim)
            throw MissingDataError("no verbatim payload on " + record.question_id);
        qs.value = score_verbatim(*record.verbatim);
        qs.n_rollouts = 1;
        return qs;
    }
    if (config.method == Method::cdd) {
        qs.value = score_cdd(record, config.alpha);
        qs.n_rollouts = static_cast<int>(record.rollouts.size());
        return qs;
    }

    std::vector<double> scores;
    for (const Rollout& rollout : record.rollouts) {
        if (rollout.tokens.empty())
            throw MissingDataError("rollout without tokens on " + record.question_id);
        const std::vector<TokenScore> span = select_span(record, rollout, config.span);
        switch (config.method) {
            case Method::loss: scores.push_back(score_loss(span)); break;
            case Method::mink: scores.push_back(score_mink(span, config.k_percent)); break;
            case Method::maxk: scores.push_back(score_maxk(span, config.k_percent)); break;
            case Method::minkpp: scores.push_back(score_minkpp(span, config.k_percent)); break;
            case Method::zlib: scores.push_back(score_zlib(span, rollout.text)); break;
            case Method::ref:
                if (!rollout.ref_logprobs)
                    throw MissingDataError("no reference log-probs on " + record.question_id);
                if (config.span != SpanKind::response)
                    throw MissingDataError("ref detector is defined on the response span");
                scores.push_back(score_ref(span, *rollout.ref_logprobs));
                break;
            case Method::lira:
                if (!rollout.ref_logprobs)
                    throw MissingDataError("no reference log-probs on " + record.question_id);
                if (config.span != SpanKind::response)
                    throw MissingDataError("lira detector is defined on the response span");
                scores.push_back(score_lira(span, *rollout.ref_logprobs));
                break;
            case Method::neighbor:
                if (!rollout.neighbor_phis)
                    throw MissingDataError("no neighbor phis on " + record.question_id);
                scores.push_back(score_neighbor(span, *rollout.neighbor_phis));
                break;
            default: break;
        }
    }
    if (scores.empty())
        throw MissingDataError("no scorable rollouts on " + record.question_id);
    qs.value = aggregate_question(scores);
    qs.n_rollouts = static_cast<int>(scores.size());
    return qs;
}

}  // namespace contam
