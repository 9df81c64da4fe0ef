#pragma once

#include "contam/sim/analysis.hpp"

namespace contam::sim {

// Frozen-scenario construction parameters. Members get cross-entropy
// pretraining toward one accepted trajectory until the population NLL
// gap reaches target_gap; both groups share a short warm start so
// non-members also have a preferred (higher-variance) correct path.
struct ScenarioConfig {
    int n_members = 8;
    int n_nonmembers = 8;
    int vocab = 3;
    int horizon = 4;
    std::uint64_t seed = 42;
    double target_gap = 0.5;       // nats
    int warm_epochs = 8;           // pretrain epochs applied to every prompt
    double pretrain_eta = 0.1;
    int max_pretrain_epochs = 400;
    int accept_min = 2;            // accept-set size range (leaves)
    int accept_max = 5;
    double init_std = 0.3;         // logit initialization scale
};

struct Scenario {
    TabularPolicy policy;
    std::vector<PromptSpec> members;
    std::vector<PromptSpec> nonmembers;

    std::vector<PromptSpec> all_prompts() const;
    double initial_gap() const { return gap(policy, members, nonmembers); }
};

// Deterministic given the seed. Throws SimError when target_gap is not
// reachable within max_pretrain_epochs.
Scenario make_scenario(const ScenarioConfig& config);

struct PromptStep {
    std::string prompt_id;
    Membership membership = Membership::nonmember;
    double p_x = 0.0;
    double mu = 0.0;
    double beta = 0.0;
    double drift_exact = 0.0;
    double drift_predicted = 0.0;
};

struct StepReport {
    int step = 0;  // 1-based
    std::vector<PromptStep> prompts;
    double gap = 0.0;  // population gap after this step
};

struct ExperimentResult {
    double initial_gap = 0.0;
    std::vector<StepReport> steps;
    double final_gap() const { return steps.empty() ? initial_gap : steps.back().gap; }
};

// Runs `steps` outer steps on a copy of the scenario policy. pi_old is
// snapshotted every config.old_refresh_interval steps; each step
// applies one natural-gradient update per prompt and records the exact
// and predicted drifts. Deterministic given config.seed.
ExperimentResult run_experiment(const Scenario& scenario, const AlgoConfig& config, int steps);

// CSV rows: step,prompt_id,membership,p_x,mu,beta,drift_exact,drift_predicted,gap
std::string experiment_csv(const ExperimentResult& result);

struct TaylorPoint {
    double eta = 0.0;
    double max_abs_error = 0.0;  // max over prompts of |exact - predicted|
};

// Per-eta residual of the first-order drift prediction on one scenario,
// single on-policy step from the initial policy.
std::vector<TaylorPoint> taylor_check(const Scenario& scenario, AlgoConfig config,
                                      const std::vector<double>& etas);

struct TaylorSummary {
    std::vector<TaylorPoint> points;  // averaged over instances
    double mean_ratio = 0.0;          // mean of error(eta)/error(eta/2)
};

// Quadratic-decay ladder on random single-prompt instances: etas are
// eta0, eta0/2, ..., halved `halvings` times. The residual of a
// first-order prediction must shrink ~4x per halving.
TaylorSummary taylor_ladder(int instances, int vocab, int horizon, double eta0, int halvings,
                            std::uint64_t seed, Algorithm algorithm = Algorithm::raft);

// Full simulate-run configuration, parsed from a JSON config file.
struct ExperimentConfig {
    ScenarioConfig scenario;
    AlgoConfig algorithm;
    int steps = 64;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);

}  // namespace contam::sim
