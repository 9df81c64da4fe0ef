#pragma once

#include <random>

#include "contam/sim/policy.hpp"

namespace contam::sim {

enum class Algorithm { raft, raftpp, grpo_idealized, grpo_empirical };
enum class SimMode { exact, sampled };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

struct AlgoConfig {
    Algorithm algorithm = Algorithm::raft;
    double eta = 0.5;        // natural-gradient step size
    double epsilon = 0.2;    // clip range
    int group_size = 8;      // rollouts per prompt in sampled mode
    bool clipping_enabled = true;
    bool importance_sampling_enabled = true;
    SimMode mode = SimMode::exact;
    std::uint64_t seed = 0;
    // Steps between pi_old snapshots. The sampler policy is refreshed
    // every this many outer steps; between refreshes the importance
    // ratio drifts away from 1 and the clip gate can activate.
    int old_refresh_interval = 4;
};

// Exact per-state quantities. Vectors are indexed by action.
struct StateStats {
    Eigen::VectorXd q;    // q(s,a) = Pr(r = 1 | s, a)
    double p_s = 0.0;     // E_{a~pi}[q(s,a)]
    Eigen::VectorXd rho;  // pi / pi_old (all ones when IS is off)
    Eigen::VectorXd m;    // clip mask in {0,1}
    double B = 0.0;       // E_a[rho m q]
    double C = 0.0;       // E_a[rho m]
};

// Advantage decomposition at one state: A is the state-action
// advantage (the conditional expectation of the algorithm's per-token
// advantage given (s,a)), Aw = rho*m*A, Abar = E_a[Aw], and
// Atilde = Aw - Abar is the logit increment direction.
struct StateAdvantage {
    Eigen::VectorXd A;
    Eigen::VectorXd rho;
    Eigen::VectorXd m;
    Eigen::VectorXd w;   // rho .* m
    Eigen::VectorXd Aw;
    double Abar = 0.0;
    Eigen::VectorXd Atilde;
};

struct PromptStats {
    double p_x = 0.0;                // overall success rate
    std::vector<StateStats> states;  // node-indexed
};

struct AdvantageMap {
    double p_x = 0.0;
    std::vector<StateAdvantage> states;  // node-indexed
};

struct StepPrediction {
    double mu = 0.0;         // E[(1/T) sum Atilde | r=1]
    double beta = 0.0;       // Cov(nll, sum Atilde | r=1)
    double predicted = 0.0;  // -eta*mu + eta*beta
};

// Clip gate of the PPO-style surrogate: 0 exactly when the min picks
// the clipped (constant) branch, i.e. the token passes no gradient.
// Boundary values keep the gradient (mask 1); A = 0 keeps mask 1.
double clip_mask(double rho, double advantage, double epsilon);

// Exact q / p / B / C / rho / m by backward induction over the tree.
// rho and m are computed against old_tree under the config.
PromptStats prompt_stats(const PromptTree& tree, const PromptTree& old_tree,
                         const PromptSpec& prompt, const AlgoConfig& config);

// State-action advantages for the configured algorithm. In sampled
// mode q and the group advantages are estimated from group_size
// rollouts drawn from the current tree via rng. grpo_empirical
// requires sampled mode.
AdvantageMap advantages(const PromptTree& tree, const PromptTree& old_tree,
                        const PromptSpec& prompt, const AlgoConfig& config,
                        std::mt19937_64* rng = nullptr);

// z <- z + eta * Atilde on every row.
PromptTree natural_gradient_step(const PromptTree& tree, const AdvantageMap& adv, double eta);

// Exact change of the reward-conditioned expected NLL.
double drift_exact(const PromptTree& tree_k, const PromptTree& tree_k1, const PromptSpec& prompt);

// First-order drift decomposition: conditional mean push and
// NLL/advantage covariance over reward-1 trajectories.
StepPrediction drift_predicted(const PromptTree& tree, const PromptTree& old_tree,
                               const PromptSpec& prompt, const AlgoConfig& config);

// Same decomposition from a precomputed advantage map.
StepPrediction drift_predicted(const PromptTree& tree, const PromptSpec& prompt,
                               const AdvantageMap& adv, double eta);

// Monte-Carlo estimate of mu from `samples` rollouts drawn from tree.
double estimate_mu(const PromptTree& tree, const PromptSpec& prompt, const AdvantageMap& adv,
                   int samples, std::mt19937_64& rng);

// Population NLL gap: E_nonmembers[nll | r=1] - E_members[nll | r=1].
double gap(const TabularPolicy& policy, const std::vector<PromptSpec>& members,
           const std::vector<PromptSpec>& nonmembers);

}  // namespace contam::sim
