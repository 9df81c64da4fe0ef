#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "contam/detectors.hpp"

using namespace contam;

namespace {

std::vector<TokenScore> make_tokens(const std::vector<double>& lps) {
    std::vector<TokenScore> out;
    for (double lp : lps) {
        TokenScore t;
        t.logprob = lp;
        out.push_back(t);
    }
    return out;
}

std::vector<double> random_logprobs(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(-8.0, 0.0);
    std::vector<double> lps(n);
    for (double& lp : lps) lp = u(rng);
    return lps;
}

// Straight-from-the-definition mean of the k% smallest (or largest).
double extreme_oracle(std::vector<double> lps, double k, bool lowest) {
    std::sort(lps.begin(), lps.end());
    if (!lowest) std::reverse(lps.begin(), lps.end());
    const std::size_t m = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(k / 100.0 * static_cast<double>(lps.size()))));
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum += lps[i];
    return sum / static_cast<double>(m);
}

// Plain recursive Levenshtein, safe for tiny inputs only.
int edit_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b,
                std::size_t i = 0, std::size_t j = 0) {
    if (i == a.size()) return static_cast<int>(b.size() - j);
    if (j == b.size()) return static_cast<int>(a.size() - i);
    const int sub = edit_oracle(a, b, i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    return std::min({sub, edit_oracle(a, b, i + 1, j) + 1, edit_oracle(a, b, i, j + 1) + 1});
}

Rollout text_rollout(const std::string& text, bool greedy) {
    Rollout r;
    r.text = text;
    r.is_greedy = greedy;
    TokenScore t;
    t.logprob = -1.0;
    r.tokens.push_back(t);  // tokens without text: CDD falls back to code points
    return r;
}

}  // namespace

TEST_CASE("loss is the average log-prob") {
    CHECK(score_loss(make_tokens({-1.0, -2.0, -3.0})) == doctest::Approx(-2.0));
}

TEST_CASE("min/max-k match the sort-based definition") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng() % 40;
        const auto lps = random_logprobs(rng, n);
        const double k = std::uniform_real_distribution<double>(1.0, 100.0)(rng);
        const auto tokens = make_tokens(lps);
        CHECK(score_mink(tokens, k) == doctest::Approx(extreme_oracle(lps, k, true)).epsilon(1e-12));
        CHECK(score_maxk(tokens, k) ==
              doctest::Approx(extreme_oracle(lps, k, false)).epsilon(1e-12));
    }
}

TEST_CASE("mink <= loss <= maxk") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const auto tokens = make_tokens(random_logprobs(rng, 1 + rng() % 30));
        const double k = std::uniform_real_distribution<double>(1.0, 100.0)(rng);
        CHECK(score_mink(tokens, k) <= score_loss(tokens) + 1e-12);
        CHECK(score_maxk(tokens, k) >= score_loss(tokens) - 1e-12);
    }
}

TEST_CASE("k = 100 degenerates to the plain loss") {
    const auto tokens = make_tokens({-0.5, -1.5, -4.0});
    CHECK(score_mink(tokens, 100.0) == doctest::Approx(score_loss(tokens)));
    CHECK(score_maxk(tokens, 100.0) == doctest::Approx(score_loss(tokens)));
}

TEST_CASE("small k selects at least one token") {
    CHECK(score_mink(make_tokens({-5.0, -1.0}), 1.0) == doctest::Approx(-5.0));
    CHECK(score_maxk(make_tokens({-5.0, -1.0}), 1.0) == doctest::Approx(-1.0));
}

TEST_CASE("k out of range is rejected") {
    const auto tokens = make_tokens({-1.0});
    CHECK_THROWS_AS(score_mink(tokens, 0.0), Error);
    CHECK_THROWS_AS(score_mink(tokens, 101.0), Error);
}

TEST_CASE("minkpp standardizes before selecting") {
    std::vector<TokenScore> tokens = make_tokens({-1.0, -6.0});
    tokens[0].vocab_mean = -3.0;
    tokens[0].vocab_std = 0.5;  // z = 4
    tokens[1].vocab_mean = -5.0;
    tokens[1].vocab_std = 4.0;  // z = -0.25: selected despite the larger raw gap at token 0
    CHECK(score_minkpp(tokens, 50.0) == doctest::Approx(-0.25));
}

TEST_CASE("minkpp treats near-zero sigma as zero score") {
    std::vector<TokenScore> tokens = make_tokens({-1.0});
    tokens[0].vocab_mean = -1.0;
    tokens[0].vocab_std = 1e-13;
    CHECK(score_minkpp(tokens, 100.0) == doctest::Approx(0.0));
}

TEST_CASE("minkpp requires vocabulary statistics") {
    CHECK_THROWS_AS(score_minkpp(make_tokens({-1.0}), 50.0), MissingDataError);
}

TEST_CASE("zlib compressed sizes match the reference implementation") {
    CHECK(zlib_compressed_size(std::string(100, 'a')) == 12);
    CHECK(zlib_compressed_size("hello world") == 19);
}

TEST_CASE("zlib score is loss over compressed length") {
    const auto tokens = make_tokens({-2.0, -4.0});
    CHECK(score_zlib(tokens, std::string(100, 'a')) == doctest::Approx(-3.0 / 12.0));
    CHECK_THROWS_AS(score_zlib(tokens, ""), EmptySpanError);
}

TEST_CASE("ref is the phi difference, lira the ratio") {
    const auto tokens = make_tokens({-1.0, -3.0});  // phi = -2
    const std::vector<double> ref = {-2.0, -4.0};   // phi_ref = -3
    CHECK(score_ref(tokens, ref) == doctest::Approx(1.0));
    CHECK(score_lira(tokens, ref) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(score_ref(tokens, {-1.0}), MissingDataError);
}

TEST_CASE("neighbor subtracts the mean neighbor phi") {
    const auto tokens = make_tokens({-2.0});
    CHECK(score_neighbor(tokens, {-3.0, -5.0}) == doctest::Approx(2.0));
    CHECK_THROWS_AS(score_neighbor(tokens, {}), MissingDataError);
}

TEST_CASE("edit distance matches the recursive oracle exhaustively") {
    const std::vector<std::string> alphabet = {"a", "b", "c"};
    std::vector<std::vector<std::string>> seqs = {{}};
    for (int len = 1; len <= 4; ++len) {
        std::vector<std::vector<std::string>> next;
        for (const auto& s : seqs)
            if (s.size() == static_cast<std::size_t>(len) - 1)
                for (const std::string& c : alphabet) {
                    auto t = s;
                    t.push_back(c);
                    next.push_back(t);
                }
        seqs.insert(seqs.end(), next.begin(), next.end());
    }
    // Compare a cross-section, not the full quadratic blowup.
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 400; ++trial) {
        const auto& a = seqs[rng() % seqs.size()];
        const auto& b = seqs[rng() % seqs.size()];
        CHECK(edit_distance(a, b) == edit_oracle(a, b));
    }
}

TEST_CASE("lcs length basics") {
    CHECK(lcs_length({"a", "b", "c"}, {"a", "c"}) == 2);
    CHECK(lcs_length({"a"}, {"b"}) == 0);
    CHECK(lcs_length({}, {"a"}) == 0);
}

TEST_CASE("cdd units prefer token texts, fall back to code points") {
    Rollout r = text_rollout("héllo", false);
    CHECK(cdd_units(r).size() == 5);  // é is one code point
    r.tokens[0].text = "hé";
    TokenScore t;
    t.text = "llo";
    t.logprob = -1.0;
    r.tokens.push_back(t);
    CHECK(cdd_units(r) == std::vector<std::string>{"hé", "llo"});
}

TEST_CASE("cdd counts sampled rollouts inside the alpha window") {
    QuestionRecord rec;
    rec.question_id = "q";
    rec.rollouts.push_back(text_rollout("abcd", true));
    rec.rollouts.push_back(text_rollout("abcd", false));  // distance 0
    rec.rollouts.push_back(text_rollout("abcx", false));  // distance 1
    rec.rollouts.push_back(text_rollout("wxyz", false));  // distance 4
    // max sampled length 4: threshold floor(alpha * 4)
    CHECK(score_cdd(rec, 0.0) == doctest::Approx(1.0 / 3.0));
    CHECK(score_cdd(rec, 0.25) == doctest::Approx(2.0 / 3.0));
    CHECK(score_cdd(rec, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("cdd is monotone in alpha and bounded") {
    QuestionRecord rec;
    rec.question_id = "q";
    rec.rollouts.push_back(text_rollout("pattern", true));
    for (const char* s : {"pattern", "pat", "qqqqqqq", "patterns"})
        rec.rollouts.push_back(text_rollout(s, false));
    double prev = -1.0;
    for (double alpha : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
        const double v = score_cdd(rec, alpha);
        CHECK(v >= prev);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        prev = v;
    }
}

TEST_CASE("cdd requires a greedy and a sampled rollout") {
    QuestionRecord rec;
    rec.question_id = "q";
    rec.rollouts.push_back(text_rollout("x", false));
    CHECK_THROWS_AS(score_cdd(rec, 0.5), MissingDataError);
    rec.rollouts[0].is_greedy = true;
    CHECK_THROWS_AS(score_cdd(rec, 0.5), MissingDataError);
    CHECK_THROWS_AS(score_cdd(rec, 1.5), Error);
}

TEST_CASE("verbatim is rouge-l f1 on whitespace tokens") {
    VerbatimPayload p;
    p.reference_suffix = "the quick brown fox";
    p.generated_continuation = "the quick brown fox";
    CHECK(score_verbatim(p) == doctest::Approx(1.0));

    p.generated_continuation = "a quick fox ran";  // lcs = 2, gen 4, ref 4
    CHECK(score_verbatim(p) == doctest::Approx(0.5));

    p.generated_continuation = "nothing shared";
    CHECK(score_verbatim(p) == doctest::Approx(0.0));

    p.reference_suffix = "  ";
    CHECK_THROWS_AS(score_verbatim(p), MissingDataError);
}

TEST_CASE("verbatim is 1 only for an exact token match") {
    VerbatimPayload p;
    p.reference_suffix = "alpha beta";
    p.generated_continuation = "alpha beta gamma";
    CHECK(score_verbatim(p) < 1.0);
    p.generated_continuation = " alpha\tbeta ";  // whitespace-insensitive
    CHECK(score_verbatim(p) == doctest::Approx(1.0));
}

TEST_CASE("score_question averages rollouts and fills metadata") {
    QuestionRecord rec;
    rec.question_id = "q";
    rec.benchmark = "bench";
    rec.membership = Membership::member;
    rec.stage = "pre";
    Rollout a, b;
    a.text = "x";
    a.tokens = make_tokens({-1.0, -3.0});
    b.text = "y";
    b.tokens = make_tokens({-4.0});
    rec.rollouts = {a, b};

    DetectorConfig cfg;
    cfg.method = Method::loss;
    const QuestionScore qs = score_question(rec, cfg);
    CHECK(qs.value == doctest::Approx((-2.0 + -4.0) / 2.0));
    CHECK(qs.n_rollouts == 2);
    CHECK(qs.benchmark == "bench");
    CHECK(qs.stage == "pre");
    CHECK(qs.membership == Membership::member);
}

TEST_CASE("ref and lira are response-span only") {
    QuestionRecord rec;
    rec.question_id = "q";
    Rollout r;
    r.text = "x";
    r.tokens = make_tokens({-1.0});
    r.ref_logprobs = std::vector<double>{-2.0};
    rec.rollouts = {r};
    TokenScore qt;
    qt.logprob = -1.0;
    rec.question_tokens = std::vector<TokenScore>{qt};

    DetectorConfig cfg;
    cfg.method = Method::ref;
    cfg.span = SpanKind::question_plus_response;
    CHECK_THROWS_AS(score_question(rec, cfg), MissingDataError);
    cfg.span = SpanKind::response;
    CHECK(score_question(rec, cfg).value == doctest::Approx(1.0));
}

TEST_CASE("method names and orientations") {
    for (const char* s :
         {"loss", "zlib", "mink", "minkpp", "maxk", "ref", "lira", "neighbor", "cdd", "verbatim"})
        CHECK(to_string(method_from_string(s)) == s);
    CHECK_THROWS_AS(method_from_string("nope"), Error);
    CHECK(default_orientation(Method::lira) == Orientation::lower_is_member);
    CHECK(default_orientation(Method::loss) == Orientation::higher_is_member);
    DetectorConfig cfg;
    cfg.method = Method::lira;
    CHECK(cfg.effective_orientation() == Orientation::lower_is_member);
    cfg.orientation = Orientation::higher_is_member;
    CHECK(cfg.effective_orientation() == Orientation::higher_is_member);
}
