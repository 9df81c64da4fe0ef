#include "contam/ingest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace contam {

using nlohmann::json;

std::string to_string(Membership m) {
    return m == Membership::member ? "member" : "nonmember";
}

Membership membership_from_string(const std::string& s) {
    if (s == "member") return Membership::member;
    if (s == "nonmember") return Membership::nonmember;
    throw Error("membership must be \"member\" or \"nonmember\", got \"" + s + "\"");
}

std::string to_string(SpanKind k) {
    switch (k) {
        case SpanKind::response: return "response";
        case SpanKind::question: return "question";
        case SpanKind::question_plus_response: return "question_plus_response";
        case SpanKind::think_only: return "think_only";
        case SpanKind::post_think: return "post_think";
    }
    return "response";
}

SpanKind span_from_string(const std::string& s) {
    if (s == "response") return SpanKind::response;
    if (s == "question") return SpanKind::question;
    if (s == "question_plus_response") return SpanKind::question_plus_response;
    if (s == "think_only") return SpanKind::think_only;
    if (s == "post_think") return SpanKind::post_think;
    throw Error("unknown span \"" + s + "\"");
}

namespace {

[[noreturn]] void fail(std::size_t line, const std::string& field, const std::string& msg) {
    throw ParseError(line, field.empty() ? msg : field + ": " + msg);
}

double require_number(const json& j, const std::string& field, std::size_t line) {
    if (!j.contains(field) || !j[field].is_number())
        fail(line, field, "missing or non-numeric");
    return j[field].get<double>();
}

std::string require_string(const json& j, const std::string& field, std::size_t line) {
    if (!j.contains(field) || !j[field].is_string())
        fail(line, field, "missing or non-string");
    return j[field].get<std::string>();
}

TokenScore parse_token(const json& j, const std::string& path, std::size_t line) {
    if (!j.is_object()) fail(line, path, "token must be an object");
    TokenScore ts;
    if (!j.contains("lp") || !j["lp"].is_number()) fail(line, path + ".lp", "missing or non-numeric");
    ts.logprob = j["lp"].get<double>();
    if (j.contains("t")) ts.text = j["t"].get<std::string>();
    if (j.contains("mu")) ts.vocab_mean = j["mu"].get<double>();
    if (j.contains("sigma")) ts.vocab_std = j["sigma"].get<double>();
    return ts;
}

std::vector<TokenScore> parse_token_array(const json& j, const std::string& path, std::size_t line) {
    if (!j.is_array()) fail(line, path, "must be an array");
    std::vector<TokenScore> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i)
        out.push_back(parse_token(j[i], path + "[" + std::to_string(i) + "]", line));
    return out;
}

QuestionRecord parse_record_json(const json& j, std::size_t line) {
    if (!j.is_object()) fail(line, "", "record must be an object");
    QuestionRecord r;
    r.question_id = require_string(j, "question_id", line);
    r.benchmark = require_string(j, "benchmark", line);
    try {
        r.membership = membership_from_string(require_string(j, "membership", line));
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        fail(line, "membership", e.what());
    }
    r.question_text = require_string(j, "question_text", line);
    if (j.contains("stage")) r.stage = j["stage"].get<std::string>();
    if (j.contains("verbatim")) {
        const json& v = j["verbatim"];
        VerbatimPayload p;
        p.prefix_ratio = require_number(v, "prefix_ratio", line);
        p.generated_continuation = require_string(v, "generated_continuation", line);
        p.reference_suffix = require_string(v, "reference_suffix", line);
        r.verbatim = std::move(p);
    }
    if (j.contains("question_tokens"))
        r.question_tokens = parse_token_array(j["question_tokens"], "question_tokens", line);
    if (j.contains("rollouts")) {
        if (!j["rollouts"].is_array()) fail(line, "rollouts", "must be an array");
        for (std::size_t i = 0; i < j["rollouts"].size(); ++i) {
            const json& jr = j["rollouts"][i];
            const std::string path = "rollouts[" + std::to_string(i) + "]";
            if (!jr.is_object()) fail(line, path, "must be an object");
            Rollout ro;
            ro.text = require_string(jr, "text", line);
            if (jr.contains("greedy")) ro.is_greedy = jr["greedy"].get<bool>();
            if (!jr.contains("tokens")) fail(line, path + ".tokens", "missing");
            ro.tokens = parse_token_array(jr["tokens"], path + ".tokens", line);
            if (jr.contains("ref_lps")) ro.ref_logprobs = jr["ref_lps"].get<std::vector<double>>();
            if (jr.contains("neighbor_phis"))
                ro.neighbor_phis = jr["neighbor_phis"].get<std::vector<double>>();
            if (jr.contains("correct")) ro.correct = jr["correct"].get<bool>();
            r.rollouts.push_back(std::move(ro));
        }
    }
    return r;
}

json token_to_json(const TokenScore& t) {
    json j;
    if (t.text) j["t"] = *t.text;
    j["lp"] = t.logprob;
    if (t.vocab_mean) j["mu"] = *t.vocab_mean;
    if (t.vocab_std) j["sigma"] = *t.vocab_std;
    return j;
}

}  // namespace

std::vector<QuestionRecord> parse_records(std::istream& in) {
    std::vector<QuestionRecord> out;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail(lineno, "", std::string("invalid JSON: ") + e.what());
        }
        QuestionRecord r;
        try {
            r = parse_record_json(j, lineno);
        } catch (const json::exception& e) {
            fail(lineno, "", std::string("bad field type: ") + e.what());
        }
        if (!seen.insert(r.question_id).second)
            fail(lineno, "question_id", "duplicate question_id \"" + r.question_id + "\"");
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<QuestionRecord> parse_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return parse_records(in);
}

std::string serialize_records(const std::vector<QuestionRecord>& records) {
    std::ostringstream out;
    for (const QuestionRecord& r : records) {
        json j;
        j["question_id"] = r.question_id;
        j["benchmark"] = r.benchmark;
        j["membership"] = to_string(r.membership);
        j["question_text"] = r.question_text;
        if (r.stage) j["stage"] = *r.stage;
        if (r.verbatim) {
            j["verbatim"] = {{"prefix_ratio", r.verbatim->prefix_ratio},
                             {"generated_continuation", r.verbatim->generated_continuation},
                             {"reference_suffix", r.verbatim->reference_suffix}};
        }
        if (r.question_tokens) {
            json arr = json::array();
            for (const TokenScore& t : *r.question_tokens) arr.push_back(token_to_json(t));
            j["question_tokens"] = std::move(arr);
        }
        json rolls = json::array();
        for (const Rollout& ro : r.rollouts) {
            json jr;
            jr["text"] = ro.text;
            if (ro.is_greedy) jr["greedy"] = true;
            json toks = json::array();
            for (const TokenScore& t : ro.tokens) toks.push_back(token_to_json(t));
            jr["tokens"] = std::move(toks);
            if (ro.ref_logprobs) jr["ref_lps"] = *ro.ref_logprobs;
            if (ro.neighbor_phis) jr["neighbor_phis"] = *ro.neighbor_phis;
            if (ro.correct) jr["correct"] = *ro.correct;
            rolls.push_back(std::move(jr));
        }
        j["rollouts"] = std::move(rolls);
        out << j.dump() << "\n";
    }
    return out.str();
}

std::vector<std::string> validate_record(const QuestionRecord& r) {
    std::vector<std::string> v;
    auto bad = [&](const std::string& field, const std::string& msg) {
        v.push_back(r.question_id + ": " + field + ": " + msg);
    };
    int greedy = 0;
    for (std::size_t i = 0; i < r.rollouts.size(); ++i) {
        const Rollout& ro = r.rollouts[i];
        const std::string path = "rollouts[" + std::to_string(i) + "]";
        if (ro.is_greedy) ++greedy;
        for (std::size_t k = 0; k < ro.tokens.size(); ++k) {
            const TokenScore& t = ro.tokens[k];
            if (t.logprob > 0.0)
                bad(path + ".tokens[" + std::to_string(k) + "].lp", "log-probability above 0");
            if (t.vocab_std && *t.vocab_std < 0.0)
                bad(path + ".tokens[" + std::to_string(k) + "].sigma", "negative std");
        }
        if (ro.ref_logprobs && ro.ref_logprobs->size() != ro.tokens.size())
            bad(path + ".ref_lps", "length " + std::to_string(ro.ref_logprobs->size()) +
                                       " does not match tokens length " +
                                       std::to_string(ro.tokens.size()));
    }
    if (greedy > 1) bad("is_greedy", std::to_string(greedy) + " greedy rollouts, at most 1 allowed");
    if (r.verbatim && (r.verbatim->prefix_ratio <= 0.0 || r.verbatim->prefix_ratio >= 1.0))
        bad("verbatim.prefix_ratio", "must be strictly between 0 and 1");
    return v;
}

namespace {

// Maps a byte offset in the concatenated token text to the first token
// whose span ends after the offset.
std::vector<std::size_t> token_starts(const std::vector<TokenScore>& tokens) {
    std::vector<std::size_t> starts(tokens.size() + 1, 0);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (!tokens[i].text)
            throw MissingDataError("think spans need token text on every token");
        starts[i + 1] = starts[i] + tokens[i].text->size();
    }
    return starts;
}

std::string concat_text(const std::vector<TokenScore>& tokens) {
    std::string s;
    for (const TokenScore& t : tokens) s += *t.text;
    return s;
}

}  // namespace

std::vector<TokenScore> select_span(const QuestionRecord& record, const Rollout& rollout,
                                    SpanKind span) {
    switch (span) {
        case SpanKind::response:
            return rollout.tokens;
        case SpanKind::question: {
            if (!record.question_tokens)
                throw MissingDataError("record " + record.question_id +
                                       " has no question_tokens for the question span");
            return *record.question_tokens;
        }
        case SpanKind::question_plus_response: {
            if (!record.question_tokens)
                throw MissingDataError("record " + record.question_id +
                                       " has no question_tokens for the question+response span");
            std::vector<TokenScore> out = *record.question_tokens;
            out.insert(out.end(), rollout.tokens.begin(), rollout.tokens.end());
            return out;
        }
        case SpanKind::think_only:
        case SpanKind::post_think:
            break;
    }

    static const std::string kOpen = "<think>";
    static const std::string kClose = "</think>";
    const std::vector<std::size_t> starts = token_starts(rollout.tokens);
    const std::string text = concat_text(rollout.tokens);

    const std::size_t open = text.find(kOpen);
    if (open == std::string::npos) {
        if (span == SpanKind::think_only)
            throw EmptySpanError("no <think> marker in rollout text");
        return rollout.tokens;  // post_think without markers: full response
    }
    const std::size_t body_begin = open + kOpen.size();
    const std::size_t close = text.find(kClose, body_begin);

    // First token fully after a byte offset.
    auto first_token_at_or_after = [&](std::size_t off) {
        std::size_t i = 0;
        while (i < rollout.tokens.size() && starts[i] < off) ++i;
        return i;
    };
    // First token whose span reaches past the offset.
    auto first_token_reaching = [&](std::size_t off) {
        std::size_t i = 0;
        while (i < rollout.tokens.size() && starts[i + 1] <= off) ++i;
        return i;
    };

    std::vector<TokenScore> out;
    if (span == SpanKind::think_only) {
        const std::size_t lo = first_token_at_or_after(body_begin);
        const std::size_t hi =
            close == std::string::npos ? rollout.tokens.size() : first_token_reaching(close);
        for (std::size_t i = lo; i < hi; ++i) out.push_back(rollout.tokens[i]);
        if (out.empty()) throw EmptySpanError("think span contains no tokens");
    } else {  // post_think
        if (close == std::string::npos) return rollout.tokens;
        const std::size_t lo = first_token_at_or_after(close + kClose.size());
        for (std::size_t i = lo; i < rollout.tokens.size(); ++i) out.push_back(rollout.tokens[i]);
    }
    return out;
}

double avg_logprob(const std::vector<TokenScore>& tokens) {
    if (tokens.empty()) throw EmptySpanError("avg_logprob over an empty span");
    double sum = 0.0;
    for (const TokenScore& t : tokens) sum += t.logprob;
    return sum / static_cast<double>(tokens.size());
}

}  // namespace contam
