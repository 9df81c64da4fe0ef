#include "contam/sim/analysis.hpp"

#include <cmath>
#include <functional>

namespace contam::sim {

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::raft: return "raft";
        case Algorithm::raftpp: return "raftpp";
        case Algorithm::grpo_idealized: return "grpo_idealized";
        case Algorithm::grpo_empirical: return "grpo_empirical";
    }
    return "raft";
}

Algorithm algorithm_from_string(const std::string& s) {
    for (Algorithm a : {Algorithm::raft, Algorithm::raftpp, Algorithm::grpo_idealized,
                        Algorithm::grpo_empirical})
        if (to_string(a) == s) return a;
    throw SimError("unknown algorithm \"" + s + "\"");
}

double clip_mask(double rho, double advantage, double epsilon) {
    if (epsilon < 0.0) throw SimError("epsilon must be >= 0");
    if (advantage > 0.0 && rho > 1.0 + epsilon) return 0.0;
    if (advantage < 0.0 && rho < 1.0 - epsilon) return 0.0;
    return 1.0;
}

namespace {

// Fills q and p_s for every node by backward induction; returns p_x.
double backward_induction(const PromptTree& tree, const PromptSpec& prompt,
                          std::vector<StateStats>& states) {
    const int V = prompt.vocab, T = prompt.horizon;
    std::function<double(std::vector<int>&)> visit = [&](std::vector<int>& prefix) {
        const int node = tree.node(prefix);
        const int depth = static_cast<int>(prefix.size());
        StateStats& st = states[node];
        st.q = Eigen::VectorXd::Zero(V);
        for (int a = 0; a < V; ++a) {
            prefix.push_back(a);
            st.q(a) = depth + 1 == T ? (prompt.accept.count(prefix) ? 1.0 : 0.0) : visit(prefix);
            prefix.pop_back();
        }
        st.p_s = tree.probs(node).dot(st.q);
        return st.p_s;
    };
    std::vector<int> prefix;
    return visit(prefix);
}

// Sampled estimate of q(s,a) (and optionally the per-visit group
// advantage for grpo_empirical) from group_size rollouts drawn from
// old_tree.
struct SampledEstimates {
    std::vector<Eigen::VectorXd> value;  // node-indexed, per action
    double p_x = 0.0;
};

SampledEstimates sample_estimates(const PromptTree& old_tree, const PromptSpec& prompt,
                                  const AlgoConfig& config, std::mt19937_64& rng) {
    const int V = prompt.vocab, T = prompt.horizon;
    const int G = config.group_size;
    if (G < 1) throw SimError("group_size must be >= 1");
    if (config.algorithm == Algorithm::grpo_empirical && G < 2)
        throw SimError("grpo_empirical needs group_size >= 2");

    std::vector<std::vector<int>> rollouts(G);
    std::vector<double> rewards(G);
    for (int i = 0; i < G; ++i) {
        std::vector<int> actions;
        actions.reserve(T);
        for (int t = 0; t < T; ++t) {
            const Eigen::VectorXd p = old_tree.probs(old_tree.node(actions));
            double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
            int a = 0;
            while (a < V - 1 && u > p(a)) u -= p(a), ++a;
            actions.push_back(a);
        }
        rewards[i] = prompt.accept.count(actions) ? 1.0 : 0.0;
        rollouts[i] = std::move(actions);
    }

    double mean_r = 0.0;
    for (double r : rewards) mean_r += r;
    mean_r /= G;

    // Per-rollout credit: reward for the q estimate, or the
    // group-normalized advantage for grpo_empirical.
    std::vector<double> credit = rewards;
    if (config.algorithm == Algorithm::grpo_empirical) {
        double var = 0.0;
        for (double r : rewards) var += (r - mean_r) * (r - mean_r);
        const double sd = std::sqrt(var / G);
        for (double& c : credit) c = sd < 1e-12 ? 0.0 : (c - mean_r) / sd;
    }

    SampledEstimates est;
    est.p_x = mean_r;
    est.value.assign(old_tree.node_count(), Eigen::VectorXd::Zero(V));
    std::vector<Eigen::VectorXd> counts(est.value.size(), Eigen::VectorXd::Zero(V));
    for (int i = 0; i < G; ++i) {
        std::vector<int> prefix;
        for (int a : rollouts[i]) {
            const int node = old_tree.node(prefix);
            est.value[node](a) += credit[i];
            counts[node](a) += 1.0;
            prefix.push_back(a);
        }
    }
    for (std::size_t n = 0; n < est.value.size(); ++n)
        for (int a = 0; a < V; ++a)
            if (counts[n](a) > 0.0) est.value[n](a) /= counts[n](a);
    return est;
}

}  // namespace

PromptStats prompt_stats(const PromptTree& tree, const PromptTree& old_tree,
                         const PromptSpec& prompt, const AlgoConfig& config) {
    prompt.validate();
    const int V = prompt.vocab;
    PromptStats stats;
    stats.states.resize(tree.node_count());
    stats.p_x = backward_induction(tree, prompt, stats.states);

    for (int node = 0; node < tree.node_count(); ++node) {
        StateStats& st = stats.states[node];
        const Eigen::VectorXd pi = tree.probs(node);
        if (config.importance_sampling_enabled && config.algorithm != Algorithm::raft) {
            const Eigen::VectorXd pi_old = old_tree.probs(node);
            st.rho = pi.array() / pi_old.array();
        } else {
            st.rho = Eigen::VectorXd::Ones(V);
        }
        st.m = Eigen::VectorXd::Ones(V);
        if (config.clipping_enabled && config.algorithm != Algorithm::raft) {
            for (int a = 0; a < V; ++a) {
                // Mask sign follows the state-action advantage of the
                // configured algorithm.
                const double adv_sign = config.algorithm == Algorithm::raft ||
                                                config.algorithm == Algorithm::raftpp
                                            ? st.q(a)
                                            : st.q(a) - stats.p_x;
                st.m(a) = clip_mask(st.rho(a), adv_sign, config.epsilon);
            }
        }
        st.B = pi.dot((st.rho.array() * st.m.array() * st.q.array()).matrix());
        st.C = pi.dot((st.rho.array() * st.m.array()).matrix());
    }
    return stats;
}

AdvantageMap advantages(const PromptTree& tree, const PromptTree& old_tree,
                        const PromptSpec& prompt, const AlgoConfig& config, std::mt19937_64* rng) {
    if (config.mode == SimMode::exact && config.algorithm == Algorithm::grpo_empirical)
        throw SimError("grpo_empirical is only defined in sampled mode");
    if (config.mode == SimMode::sampled && rng == nullptr)
        throw SimError("sampled mode needs an rng");

    const PromptStats stats = prompt_stats(tree, old_tree, prompt, config);

    AdvantageMap map;
    map.p_x = stats.p_x;
    map.states.resize(tree.node_count());

    std::vector<Eigen::VectorXd> value;  // state-action advantage estimate
    double p_x = stats.p_x;
    if (config.mode == SimMode::sampled) {
        const SampledEstimates est = sample_estimates(old_tree, prompt, config, *rng);
        value = est.value;
        p_x = est.p_x;
        if (config.algorithm == Algorithm::grpo_idealized)
            for (Eigen::VectorXd& v : value) v.array() -= p_x;
        map.p_x = p_x;
    }

    for (int node = 0; node < tree.node_count(); ++node) {
        const StateStats& st = stats.states[node];
        StateAdvantage& adv = map.states[node];
        if (config.mode == SimMode::sampled) {
            adv.A = value[node];
        } else {
            switch (config.algorithm) {
                case Algorithm::raft:
                case Algorithm::raftpp: adv.A = st.q; break;
                case Algorithm::grpo_idealized: adv.A = st.q.array() - stats.p_x; break;
                case Algorithm::grpo_empirical: break;  // unreachable
            }
        }
        adv.rho = st.rho;
        adv.m = st.m;
        adv.w = (st.rho.array() * st.m.array()).matrix();
        adv.Aw = (adv.w.array() * adv.A.array()).matrix();
        adv.Abar = tree.probs(node).dot(adv.Aw);
        adv.Atilde = adv.Aw.array() - adv.Abar;
    }
    return map;
}

PromptTree natural_gradient_step(const PromptTree& tree, const AdvantageMap& adv, double eta) {
    PromptTree out = tree;
    for (int node = 0; node < tree.node_count(); ++node)
        out.logits(node) += eta * adv.states[node].Atilde;
    return out;
}

double drift_exact(const PromptTree& tree_k, const PromptTree& tree_k1, const PromptSpec& prompt) {
    return conditional_nll(tree_k1, prompt) - conditional_nll(tree_k, prompt);
}

StepPrediction drift_predicted(const PromptTree& tree, const PromptSpec& prompt,
                               const AdvantageMap& adv, double eta) {
    double mass = 0.0, e_psi = 0.0, e_l = 0.0, sum_w_psi_l = 0.0;
    for (const Trajectory& tr : enumerate_trajectories(prompt, tree)) {
        if (tr.reward <= 0.0) continue;
        double psi = 0.0;
        std::vector<int> prefix;
        prefix.reserve(tr.actions.size());
        for (int a : tr.actions) {
            psi += adv.states[tree.node(prefix)].Atilde(a);
            prefix.push_back(a);
        }
        const double l = nll(tree, prompt, tr.actions);
        mass += tr.probability;
        e_psi += tr.probability * psi;
        e_l += tr.probability * l;
        sum_w_psi_l += tr.probability * psi * l;
    }
    if (mass <= 0.0)
        throw SimError(prompt.prompt_id + ": zero success probability, drift undefined");
    e_psi /= mass;
    e_l /= mass;
    const double e_lpsi = sum_w_psi_l / mass;

    StepPrediction p;
    p.mu = e_psi / static_cast<double>(prompt.horizon);
    p.beta = e_lpsi - e_l * e_psi;
    p.predicted = -eta * p.mu + eta * p.beta;
    return p;
}

StepPrediction drift_predicted(const PromptTree& tree, const PromptTree& old_tree,
                               const PromptSpec& prompt, const AlgoConfig& config) {
    std::mt19937_64 rng(config.seed);
    const AdvantageMap adv =
        advantages(tree, old_tree, prompt, config,
                   config.mode == SimMode::sampled ? &rng : nullptr);
    return drift_predicted(tree, prompt, adv, config.eta);
}

double estimate_mu(const PromptTree& tree, const PromptSpec& prompt, const AdvantageMap& adv,
                   int samples, std::mt19937_64& rng) {
    const int V = prompt.vocab, T = prompt.horizon;
    double sum = 0.0;
    long correct = 0;
    for (int i = 0; i < samples; ++i) {
        std::vector<int> actions;
        actions.reserve(T);
        double psi = 0.0;
        for (int t = 0; t < T; ++t) {
            const int node = tree.node(actions);
            const Eigen::VectorXd p = tree.probs(node);
            double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
            int a = 0;
            while (a < V - 1 && u > p(a)) u -= p(a), ++a;
            psi += adv.states[node].Atilde(a);
            actions.push_back(a);
        }
        if (prompt.accept.count(actions)) {
            sum += psi / T;
            ++correct;
        }
    }
    if (correct == 0) throw SimError("no correct rollouts in mu estimate");
    return sum / static_cast<double>(correct);
}

double gap(const TabularPolicy& policy, const std::vector<PromptSpec>& members,
           const std::vector<PromptSpec>& nonmembers) {
    auto mean_cond_nll = [&](const std::vector<PromptSpec>& prompts) {
        if (prompts.empty()) throw SimError("gap over an empty prompt set");
        double sum = 0.0;
        for (const PromptSpec& p : prompts) sum += conditional_nll(policy.tree(p.prompt_id), p);
        return sum / static_cast<double>(prompts.size());
    };
    return mean_cond_nll(nonmembers) - mean_cond_nll(members);
}

}  // namespace contam::sim
