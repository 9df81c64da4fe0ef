#include "contam/sim/experiment.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace contam::sim {

using nlohmann::json;

std::vector<PromptSpec> Scenario::all_prompts() const {
    std::vector<PromptSpec> all = members;
    all.insert(all.end(), nonmembers.begin(), nonmembers.end());
    return all;
}

namespace {

std::vector<int> decode_leaf(long index, int vocab, int horizon) {
    std::vector<int> seq(horizon);
    for (int t = horizon - 1; t >= 0; --t) {
        seq[t] = static_cast<int>(index % vocab);
        index /= vocab;
    }
    return seq;
}

// One cross-entropy epoch pulling the tree toward the target sequence.
void pretrain_epoch(PromptTree& tree, const std::vector<int>& target, double eta) {
    std::vector<int> prefix;
    prefix.reserve(target.size());
    for (int a : target) {
        const int node = tree.node(prefix);
        Eigen::VectorXd g = -tree.probs(node);
        g(a) += 1.0;
        tree.logits(node) += eta * g;
        prefix.push_back(a);
    }
}

}  // namespace

Scenario make_scenario(const ScenarioConfig& cfg) {
    if (cfg.n_members < 1 || cfg.n_nonmembers < 1)
        throw SimError("scenario needs at least one member and one non-member");
    if (cfg.accept_min < 1 || cfg.accept_max < cfg.accept_min)
        throw SimError("bad accept-set size range");

    std::mt19937_64 rng(cfg.seed);
    long leaves = 1;
    for (int t = 0; t < cfg.horizon; ++t) leaves *= cfg.vocab;

    Scenario sc;
    std::normal_distribution<double> init(0.0, cfg.init_std);
    std::uniform_int_distribution<int> accept_size(cfg.accept_min,
                                                   std::min<long>(cfg.accept_max, leaves));

    for (int i = 0; i < cfg.n_members + cfg.n_nonmembers; ++i) {
        const bool member = i < cfg.n_members;
        PromptSpec spec;
        spec.prompt_id = (member ? "M" : "N") + std::to_string(i);
        spec.membership = member ? Membership::member : Membership::nonmember;
        spec.vocab = cfg.vocab;
        spec.horizon = cfg.horizon;
        const int k = accept_size(rng);
        std::uniform_int_distribution<long> leaf(0, leaves - 1);
        while (static_cast<int>(spec.accept.size()) < k)
            spec.accept.insert(decode_leaf(leaf(rng), cfg.vocab, cfg.horizon));
        spec.validate();

        sc.policy.add_prompt(spec);
        PromptTree& tree = sc.policy.tree(spec.prompt_id);
        for (int node = 0; node < tree.node_count(); ++node)
            for (int a = 0; a < cfg.vocab; ++a) tree.logits(node)(a) = init(rng);
        for (int e = 0; e < cfg.warm_epochs; ++e)
            pretrain_epoch(tree, *spec.accept.begin(), cfg.pretrain_eta);

        (member ? sc.members : sc.nonmembers).push_back(std::move(spec));
    }

    int epochs = 0;
    while (sc.initial_gap() < cfg.target_gap) {
        if (epochs++ >= cfg.max_pretrain_epochs)
            throw SimError("target gap " + std::to_string(cfg.target_gap) +
                           " not reached within " + std::to_string(cfg.max_pretrain_epochs) +
                           " pretrain epochs");
        for (const PromptSpec& spec : sc.members)
            pretrain_epoch(sc.policy.tree(spec.prompt_id), *spec.accept.begin(),
                           cfg.pretrain_eta);
    }
    return sc;
}

ExperimentResult run_experiment(const Scenario& scenario, const AlgoConfig& config, int steps) {
    if (steps < 0) throw SimError("steps must be >= 0");
    if (config.old_refresh_interval < 1) throw SimError("old_refresh_interval must be >= 1");

    const std::vector<PromptSpec> prompts = scenario.all_prompts();
    TabularPolicy policy = scenario.policy;
    TabularPolicy old_policy = policy;
    std::mt19937_64 rng(config.seed);
    std::mt19937_64* rng_ptr = config.mode == SimMode::sampled ? &rng : nullptr;

    ExperimentResult result;
    result.initial_gap = gap(policy, scenario.members, scenario.nonmembers);

    for (int k = 0; k < steps; ++k) {
        if (k % config.old_refresh_interval == 0) old_policy = policy;
        StepReport report;
        report.step = k + 1;
        TabularPolicy next = policy;
        for (const PromptSpec& prompt : prompts) {
            const PromptTree& tree = policy.tree(prompt.prompt_id);
            const PromptTree& old_tree = old_policy.tree(prompt.prompt_id);
            const AdvantageMap adv = advantages(tree, old_tree, prompt, config, rng_ptr);
            const StepPrediction pred = drift_predicted(tree, prompt, adv, config.eta);
            const PromptTree stepped = natural_gradient_step(tree, adv, config.eta);

            PromptStep ps;
            ps.prompt_id = prompt.prompt_id;
            ps.membership = prompt.membership;
            ps.p_x = adv.p_x;
            ps.mu = pred.mu;
            ps.beta = pred.beta;
            ps.drift_predicted = pred.predicted;
            ps.drift_exact = drift_exact(tree, stepped, prompt);
            report.prompts.push_back(std::move(ps));
            next.tree(prompt.prompt_id) = stepped;
        }
        policy = std::move(next);
        report.gap = gap(policy, scenario.members, scenario.nonmembers);
        result.steps.push_back(std::move(report));
    }
    return result;
}

std::string experiment_csv(const ExperimentResult& result) {
    std::ostringstream out;
    out << "step,prompt_id,membership,p_x,mu,beta,drift_exact,drift_predicted,gap\n";
    out << std::setprecision(10);
    for (const StepReport& sr : result.steps)
        for (const PromptStep& ps : sr.prompts)
            out << sr.step << ',' << ps.prompt_id << ',' << to_string(ps.membership) << ','
                << ps.p_x << ',' << ps.mu << ',' << ps.beta << ',' << ps.drift_exact << ','
                << ps.drift_predicted << ',' << sr.gap << '\n';
    return out.str();
}

std::vector<TaylorPoint> taylor_check(const Scenario& scenario, AlgoConfig config,
                                      const std::vector<double>& etas) {
    config.mode = SimMode::exact;
    std::vector<TaylorPoint> out;
    for (double eta : etas) {
        config.eta = eta;
        double worst = 0.0;
        for (const PromptSpec& prompt : scenario.all_prompts()) {
            const PromptTree& tree = scenario.policy.tree(prompt.prompt_id);
            const AdvantageMap adv = advantages(tree, tree, prompt, config);
            const StepPrediction pred = drift_predicted(tree, prompt, adv, eta);
            const PromptTree stepped = natural_gradient_step(tree, adv, eta);
            worst = std::max(worst, std::abs(drift_exact(tree, stepped, prompt) - pred.predicted));
        }
        out.push_back({eta, worst});
    }
    return out;
}

TaylorSummary taylor_ladder(int instances, int vocab, int horizon, double eta0, int halvings,
                            std::uint64_t seed, Algorithm algorithm) {
    if (halvings < 2) throw SimError("need at least 2 halvings for a decay ratio");
    if (eta0 <= 0.0) throw SimError("eta must be > 0");
    if (instances < 1) throw SimError("need at least 1 instance");

    std::vector<double> etas;
    for (int i = 0; i <= halvings; ++i) etas.push_back(eta0 / static_cast<double>(1 << i));

    long leaves = 1;
    for (int t = 0; t < horizon; ++t) leaves *= vocab;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> init(0.0, 1.0);

    TaylorSummary summary;
    summary.points.resize(etas.size());
    for (std::size_t i = 0; i < etas.size(); ++i) summary.points[i].eta = etas[i];

    double ratio_sum = 0.0;
    long ratio_count = 0;
    for (int inst = 0; inst < instances; ++inst) {
        Scenario sc;
        PromptSpec spec;
        spec.prompt_id = "taylor" + std::to_string(inst);
        spec.vocab = vocab;
        spec.horizon = horizon;
        std::uniform_int_distribution<int> accept_size(3, static_cast<int>(std::min<long>(9, leaves)));
        std::uniform_int_distribution<long> leaf(0, leaves - 1);
        const int k = accept_size(rng);
        while (static_cast<int>(spec.accept.size()) < k)
            spec.accept.insert(decode_leaf(leaf(rng), vocab, horizon));
        sc.policy.add_prompt(spec);
        PromptTree& tree = sc.policy.tree(spec.prompt_id);
        for (int node = 0; node < tree.node_count(); ++node)
            for (int a = 0; a < vocab; ++a) tree.logits(node)(a) = init(rng);
        sc.members.push_back(spec);
        sc.nonmembers.push_back(spec);

        AlgoConfig cfg;
        cfg.algorithm = algorithm;
        const std::vector<TaylorPoint> pts = taylor_check(sc, cfg, etas);
        for (std::size_t i = 0; i < pts.size(); ++i)
            summary.points[i].max_abs_error += pts[i].max_abs_error / instances;
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
            if (pts[i + 1].max_abs_error > 0.0) {
                ratio_sum += pts[i].max_abs_error / pts[i + 1].max_abs_error;
                ++ratio_count;
            }
        }
    }
    summary.mean_ratio = ratio_count ? ratio_sum / ratio_count : 0.0;
    return summary;
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw SimError(std::string("bad config JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    try {
        if (j.contains("scenario")) {
            const json& s = j["scenario"];
            auto& sc = cfg.scenario;
            if (s.contains("members")) sc.n_members = s["members"].get<int>();
            if (s.contains("nonmembers")) sc.n_nonmembers = s["nonmembers"].get<int>();
            if (s.contains("vocab")) sc.vocab = s["vocab"].get<int>();
            if (s.contains("horizon")) sc.horizon = s["horizon"].get<int>();
            if (s.contains("seed")) sc.seed = s["seed"].get<std::uint64_t>();
            if (s.contains("target_gap")) sc.target_gap = s["target_gap"].get<double>();
            if (s.contains("warm_epochs")) sc.warm_epochs = s["warm_epochs"].get<int>();
            if (s.contains("pretrain_eta")) sc.pretrain_eta = s["pretrain_eta"].get<double>();
            if (s.contains("max_pretrain_epochs"))
                sc.max_pretrain_epochs = s["max_pretrain_epochs"].get<int>();
            if (s.contains("accept_min")) sc.accept_min = s["accept_min"].get<int>();
            if (s.contains("accept_max")) sc.accept_max = s["accept_max"].get<int>();
            if (s.contains("init_std")) sc.init_std = s["init_std"].get<double>();
        }
        if (j.contains("algorithm")) {
            const json& a = j["algorithm"];
            auto& al = cfg.algorithm;
            if (a.contains("name")) al.algorithm = algorithm_from_string(a["name"].get<std::string>());
            if (a.contains("eta")) al.eta = a["eta"].get<double>();
            if (a.contains("epsilon")) al.epsilon = a["epsilon"].get<double>();
            if (a.contains("group_size")) al.group_size = a["group_size"].get<int>();
            if (a.contains("clipping")) al.clipping_enabled = a["clipping"].get<bool>();
            if (a.contains("importance_sampling"))
                al.importance_sampling_enabled = a["importance_sampling"].get<bool>();
            if (a.contains("mode")) {
                const std::string m = a["mode"].get<std::string>();
                if (m == "exact") al.mode = SimMode::exact;
                else if (m == "sampled") al.mode = SimMode::sampled;
                else throw SimError("mode must be \"exact\" or \"sampled\"");
            }
            if (a.contains("seed")) al.seed = a["seed"].get<std::uint64_t>();
            if (a.contains("old_refresh_interval"))
                al.old_refresh_interval = a["old_refresh_interval"].get<int>();
        }
        if (j.contains("steps")) cfg.steps = j["steps"].get<int>();
    } catch (const json::exception& e) {
        throw SimError(std::string("bad config value: ") + e.what());
    }
    if (cfg.algorithm.eta <= 0.0) throw SimError("eta must be > 0");
    if (cfg.algorithm.epsilon < 0.0) throw SimError("epsilon must be >= 0");
    if (cfg.steps < 0) throw SimError("steps must be >= 0");
    return cfg;
}

}  // namespace contam::sim
