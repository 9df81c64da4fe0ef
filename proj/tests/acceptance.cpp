// Acceptance suite: one line per criterion, nonzero exit when any
// criterion fails. Every numeric check is made against an independent
// straight-from-the-definition oracle computed in this file.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <vector>

#include "contam/detectors.hpp"
#include "contam/metrics.hpp"
#include "contam/sim/experiment.hpp"

using namespace contam;
using namespace contam::sim;

namespace {

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail = "") {
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << name;
    if (!detail.empty()) std::cout << "  (" << detail << ")";
    std::cout << "\n";
    if (!pass) ++g_failures;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

// ---- criterion: detector scores match definitional oracles ------------

std::vector<TokenScore> random_tokens(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> lp(-9.0, 0.0);
    std::uniform_real_distribution<double> sd(0.2, 3.0);
    std::vector<TokenScore> out(n);
    for (TokenScore& t : out) {
        t.logprob = lp(rng);
        t.vocab_mean = t.logprob - sd(rng);
        t.vocab_std = sd(rng);
    }
    return out;
}

double oracle_mean_smallest(std::vector<double> v, std::size_t m) {
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += v[i];
    return s / static_cast<double>(m);
}

void check_detector_oracles() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(1001);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % 64;
        const auto tokens = random_tokens(rng, n);
        const double k = std::uniform_real_distribution<double>(1.0, 100.0)(rng);
        const std::size_t m = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::floor(k / 100.0 * static_cast<double>(n))));

        std::vector<double> lps, neg_lps, zs, refs;
        double sum = 0.0, ref_sum = 0.0;
        for (const TokenScore& t : tokens) {
            lps.push_back(t.logprob);
            neg_lps.push_back(-t.logprob);
            zs.push_back((t.logprob - *t.vocab_mean) / *t.vocab_std);
            const double r = t.logprob - 0.5;
            refs.push_back(r);
            sum += t.logprob;
            ref_sum += r;
        }
        const double phi = sum / static_cast<double>(n);
        const double phi_ref = ref_sum / static_cast<double>(n);

        worst = std::max(worst, std::abs(score_loss(tokens) - phi));
        worst = std::max(worst, std::abs(score_mink(tokens, k) - oracle_mean_smallest(lps, m)));
        worst = std::max(worst,
                         std::abs(score_maxk(tokens, k) + oracle_mean_smallest(neg_lps, m)));
        worst = std::max(worst, std::abs(score_minkpp(tokens, k) - oracle_mean_smallest(zs, m)));
        worst = std::max(worst, std::abs(score_ref(tokens, refs) - (phi - phi_ref)));
        worst = std::max(worst, std::abs(score_lira(tokens, refs) - phi / phi_ref));

        const std::vector<double> nb = {phi_ref, phi_ref - 1.0, phi_ref + 0.25};
        const double nb_mean = (nb[0] + nb[1] + nb[2]) / 3.0;
        worst = std::max(worst, std::abs(score_neighbor(tokens, nb) - (phi - nb_mean)));

        const std::string text(8 + rng() % 80, 'a' + static_cast<char>(rng() % 26));
        worst = std::max(worst, std::abs(score_zlib(tokens, text) -
                                         phi / static_cast<double>(zlib_compressed_size(text))));
    }
    const double dt = elapsed_s(t0);
    report("detector scores match definitional oracles (1000 inputs, tol 1e-12)",
           worst <= 1e-12 && dt < 10.0, "max err " + fmt(worst) + ", " + fmt(dt) + "s");
}

// ---- criterion: auroc equals the all-pairs count ----------------------

void check_auroc_exact() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2002);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t nm = 1 + rng() % 200, nn = 1 + rng() % 200;
        std::vector<double> m(nm), n(nn);
        std::normal_distribution<double> g(0.0, 1.0);
        const bool quantize = trial % 2 == 0;  // exercise heavy ties half the time
        auto draw = [&] {
            const double v = g(rng);
            return quantize ? std::round(v * 3.0) / 3.0 : v;
        };
        for (double& v : m) v = draw();
        for (double& v : n) v = draw();

        double wins = 0.0;
        for (double a : m)
            for (double b : n) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
        const double oracle = wins / (static_cast<double>(nm) * static_cast<double>(nn));
        worst = std::max(worst, std::abs(auroc(m, n) - oracle));
    }
    const double dt = elapsed_s(t0);
    report("auroc equals the all-pairs tie-aware count (1000 instances, tol 1e-12)",
           worst <= 1e-12 && dt < 10.0, "max err " + fmt(worst) + ", " + fmt(dt) + "s");
}

// ---- criterion: auroc of unit-shifted gaussians -----------------------

void check_auroc_separation() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(3003);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> members(2000), nonmembers(2000);
    const double mu = -2.5;
    for (double& v : members) v = mu + 1.0 + g(rng);
    for (double& v : nonmembers) v = mu + g(rng);
    const double a = auroc(members, nonmembers);
    // closed form: Phi(1 / sqrt(2)) for N(mu+1, 1) vs N(mu, 1)
    const double expected = 0.5 * std::erfc(-1.0 / std::sqrt(2.0) / std::sqrt(2.0));
    const double dt = elapsed_s(t0);
    report("unit-shifted gaussians score the analytic auroc (n = 2000, tol 0.02)",
           std::abs(a - expected) <= 0.02 && dt < 5.0,
           "auroc " + fmt(a) + " vs " + fmt(expected) + ", " + fmt(dt) + "s");
}

// ---- criterion: first-order drift has quadratic residual --------------

void check_taylor_order() {
    const auto t0 = std::chrono::steady_clock::now();
    const TaylorSummary s = taylor_ladder(10, 3, 4, 0.02, 2, 77);
    const double dt = elapsed_s(t0);
    report("drift prediction residual decays ~4x per eta halving (ratio in [3.2, 4.8])",
           s.mean_ratio >= 3.2 && s.mean_ratio <= 4.8 && dt < 60.0,
           "mean ratio " + fmt(s.mean_ratio) + ", " + fmt(dt) + "s");
}

// ---- criterion: raft identities ---------------------------------------

void check_raft_identities() {
    std::mt19937_64 rng(4004);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        PromptSpec p;
        p.prompt_id = "r";
        p.vocab = 3;
        p.horizon = 3;
        std::uniform_int_distribution<long> leaf(0, 26);
        while (p.accept.size() < 4) {
            long idx = leaf(rng);
            std::vector<int> seq(3);
            for (int t = 2; t >= 0; --t) seq[t] = static_cast<int>(idx % 3), idx /= 3;
            p.accept.insert(seq);
        }
        PromptTree tree(3, 3);
        std::normal_distribution<double> g(0.0, 1.0);
        for (int n = 0; n < tree.node_count(); ++n)
            for (int a = 0; a < 3; ++a) tree.logits(n)(a) = g(rng);

        AlgoConfig cfg;
        cfg.algorithm = Algorithm::raft;
        const PromptStats stats = prompt_stats(tree, tree, p, cfg);
        const AdvantageMap adv = advantages(tree, tree, p, cfg);

        // On a correct trajectory the realized token advantage is the
        // observed reward (1) centered by the policy mean, which must
        // equal 1 - p(s) at every state.
        for (int n = 0; n < tree.node_count(); ++n)
            worst = std::max(worst,
                             std::abs((1.0 - adv.states[n].Abar) - (1.0 - stats.states[n].p_s)));

        // Covariance route: centering constants drop, so
        // Cov(l, sum_t (1 - p(s_t)) | r=1) == -Cov(l, sum_t p(s_t) | r=1).
        double mass = 0.0, e_l = 0.0, e_f = 0.0, e_g = 0.0, e_lf = 0.0, e_lg = 0.0;
        for (const Trajectory& tr : enumerate_trajectories(p, tree)) {
            if (tr.reward <= 0.0) continue;
            double f = 0.0, gsum = 0.0;
            std::vector<int> prefix;
            for (int a : tr.actions) {
                const double ps = stats.states[tree.node(prefix)].p_s;
                f += 1.0 - ps;
                gsum += ps;
                prefix.push_back(a);
            }
            const double l = nll(tree, p, tr.actions);
            mass += tr.probability;
            e_l += tr.probability * l;
            e_f += tr.probability * f;
            e_g += tr.probability * gsum;
            e_lf += tr.probability * l * f;
            e_lg += tr.probability * l * gsum;
        }
        e_l /= mass, e_f /= mass, e_g /= mass, e_lf /= mass, e_lg /= mass;
        const double cov_f = e_lf - e_l * e_f;
        const double cov_g = e_lg - e_l * e_g;
        worst = std::max(worst, std::abs(cov_f + cov_g));
    }
    report("raft realized-advantage and covariance identities (tol 1e-10)", worst <= 1e-10,
           "max err " + fmt(worst));
}

// ---- criterion: clip gate truth table ---------------------------------

void check_clip_mask() {
    bool ok = true;
    const double eps = 0.2;
    ok &= clip_mask(1.21, 1.0, eps) == 0.0;   // positive, above ceiling
    ok &= clip_mask(1.2, 1.0, eps) == 1.0;    // positive, at ceiling
    ok &= clip_mask(0.79, 1.0, eps) == 1.0;   // positive, below floor
    ok &= clip_mask(0.79, -1.0, eps) == 0.0;  // negative, below floor
    ok &= clip_mask(0.8, -1.0, eps) == 1.0;   // negative, at floor
    ok &= clip_mask(1.21, -1.0, eps) == 1.0;  // negative, above ceiling
    ok &= clip_mask(0.01, 0.0, eps) == 1.0;   // zero advantage never gates
    ok &= clip_mask(99.0, 0.0, eps) == 1.0;
    ok &= clip_mask(1.0, 1.0, 0.0) == 1.0;  // eps 0: only strict moves clip
    ok &= clip_mask(1.0 + 1e-12, 1.0, 0.0) == 0.0;
    report("clip gate truth table", ok);
}

// ---- criterion: clipping contracts the member/non-member gap ----------

void check_gap_contraction() {
    const auto t0 = std::chrono::steady_clock::now();
    const Scenario sc = make_scenario(ScenarioConfig{});

    auto ratio = [&](Algorithm algo, bool clip) {
        AlgoConfig cfg;
        cfg.algorithm = algo;
        cfg.eta = 0.5;
        cfg.epsilon = 0.2;
        cfg.clipping_enabled = clip;
        cfg.old_refresh_interval = 4;
        const ExperimentResult res = run_experiment(sc, cfg, 64);
        return res.final_gap() / res.initial_gap;
    };

    const double raft = ratio(Algorithm::raft, false);
    const double raftpp_clip = ratio(Algorithm::raftpp, true);
    const double raftpp_noclip = ratio(Algorithm::raftpp, false);
    const double grpo_clip = ratio(Algorithm::grpo_idealized, true);
    const double grpo_noclip = ratio(Algorithm::grpo_idealized, false);
    const double dt = elapsed_s(t0);

    // Regression values frozen from the pilot run of this deterministic
    // scenario; a loose tolerance absorbs libm/compiler variation.
    const bool pinned = std::abs(raft - 0.3513414) < 1e-3 &&
                        std::abs(raftpp_clip - 0.1450508) < 1e-3 &&
                        std::abs(raftpp_noclip - 0.3543432) < 1e-3 &&
                        std::abs(grpo_clip - 0.1873594) < 1e-3 &&
                        std::abs(grpo_noclip - 0.3617694) < 1e-3;
    const bool ok = raftpp_clip < raft - 0.05 && grpo_clip < grpo_noclip - 0.05 &&
                    std::abs(raftpp_noclip - raft) < 0.1 && pinned && dt < 300.0;
    report("clipping contracts the gap: raft++ < raft, grpo(clip) < grpo(no clip)", ok,
           "raft " + fmt(raft) + ", raft++ clip " + fmt(raftpp_clip) + ", raft++ noclip " +
               fmt(raftpp_noclip) + ", grpo clip " + fmt(grpo_clip) + ", grpo noclip " +
               fmt(grpo_noclip) + ", " + fmt(dt) + "s");
}

// ---- criterion: stage delta arithmetic --------------------------------

void check_stage_delta() {
    const std::vector<AurocResult> results = {
        {"bench", "loss", "before", 0.7548, 50, 50},
        {"bench", "loss", "after", 0.6126, 50, 50},
    };
    const auto deltas = stage_delta(results, "before");
    double delta_after = 1e9;
    for (const StageDelta& d : deltas)
        if (d.stage == "after") delta_after = d.delta;
    report("stage delta arithmetic: 75.48 -> 61.26 is -14.22 points (tol 1e-12)",
           std::abs(delta_after - -14.22) <= 1e-12, "delta " + fmt(delta_after));
}

// ---- criterion: determinism -------------------------------------------

void check_determinism() {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "contam_acceptance";
    fs::create_directories(dir);

    // Small two-benchmark corpus with both memberships present.
    std::mt19937_64 rng(5005);
    std::vector<QuestionRecord> records;
    for (int i = 0; i < 12; ++i) {
        QuestionRecord r;
        r.question_id = "q" + std::to_string(i);
        r.benchmark = i % 2 == 0 ? "a" : "b";
        r.membership = i < 6 ? Membership::member : Membership::nonmember;
        r.question_text = "q";
        r.stage = "s";
        Rollout ro;
        ro.text = "t" + std::to_string(i);
        for (int t = 0; t < 10; ++t) {
            TokenScore ts;
            ts.logprob = -std::uniform_real_distribution<double>(0.1, 6.0)(rng);
            ro.tokens.push_back(ts);
        }
        r.rollouts.push_back(ro);
        records.push_back(std::move(r));
    }
    const fs::path input = dir / "records.jsonl";
    std::ofstream(input) << serialize_records(records);

    const std::string cli = CONTAM_CLI_PATH;
    const std::string config = std::string(CONTAM_CONFIG_DIR) + "/raftpp_clip.json";
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    auto run_twice = [&](const std::string& args, const std::string& out_stem) {
        for (int i = 0; i < 2; ++i) {
            const std::string cmd = cli + " " + args + " --out " +
                                    (dir / (out_stem + std::to_string(i))).string() +
                                    " >/dev/null 2>&1";
            if (std::system(cmd.c_str()) != 0) return false;
        }
        const std::string a = slurp(dir / (out_stem + "0"));
        return !a.empty() && a == slurp(dir / (out_stem + "1"));
    };

    const bool score_ok =
        run_twice("score --input " + input.string() + " --methods loss,mink,maxk", "score");
    const bool auroc_ok =
        score_ok && run_twice("auroc --input " + (dir / "score0").string(), "auroc");
    const bool sim_ok = run_twice("simulate --config " + config + " --steps 8", "sim");
    report("score, auroc, and simulate are byte-identical across runs",
           score_ok && auroc_ok && sim_ok);
}

}  // namespace

int main() {
    check_detector_oracles();
    check_auroc_exact();
    check_auroc_separation();
    check_taylor_order();
    check_raft_identities();
    check_clip_mask();
    check_gap_contraction();
    check_stage_delta();
    check_determinism();
    std::cout << (g_failures == 0 ? "all criteria passed"
                                  : std::to_string(g_failures) + " criteria failed")
              << "\n";
    return g_failures == 0 ? 0 : 1;
}
