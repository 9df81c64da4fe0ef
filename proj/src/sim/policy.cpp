#include "contam/sim/policy.hpp"

#include <cmath>

namespace contam::sim {

long PromptSpec::trajectory_count() const {
    long n = 1;
    for (int t = 0; t < horizon; ++t) {
        n *= vocab;
        if (n > kDefaultTrajectoryCap * 16) return n;  // avoid overflow on absurd configs
    }
    return n;
}

void PromptSpec::validate(long cap) const {
    if (vocab < 2) throw SimError(prompt_id + ": vocab must be >= 2");
    if (horizon < 1) throw SimError(prompt_id + ": horizon must be >= 1");
    if (accept.empty()) throw SimError(prompt_id + ": accept set is empty");
    for (const std::vector<int>& seq : accept) {
        if (static_cast<int>(seq.size()) != horizon)
            throw SimError(prompt_id + ": accept sequence length != horizon");
        for (int a : seq)
            if (a < 0 || a >= vocab) throw SimError(prompt_id + ": accept action out of range");
    }
    if (trajectory_count() > cap)
        throw SimError(prompt_id + ": V^T = " + std::to_string(trajectory_count()) +
                       " exceeds enumeration cap " + std::to_string(cap));
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    const Eigen::VectorXd shifted = logits.array() - logits.maxCoeff();
    const Eigen::VectorXd e = shifted.array().exp();
    return e / e.sum();
}

PromptTree::PromptTree(int vocab, int horizon) : vocab_(vocab), horizon_(horizon) {
    level_offsets_.resize(horizon + 1);
    int offset = 0, width = 1;
    for (int t = 0; t < horizon; ++t) {
        level_offsets_[t] = offset;
        offset += width;
        width *= vocab;
    }
    level_offsets_[horizon] = offset;
    rows_.assign(offset, Eigen::VectorXd::Zero(vocab));
}

int PromptTree::node(const std::vector<int>& prefix) const {
    const int t = static_cast<int>(prefix.size());
    int value = 0;
    for (int a : prefix) value = value * vocab_ + a;
    return level_offsets_[t] + value;
}

int PromptTree::child(int node_index, int depth, int action) const {
    if (depth + 1 >= horizon_) return -1;
    const int value = node_index - level_offsets_[depth];
    return level_offsets_[depth + 1] + value * vocab_ + action;
}

PromptTree& TabularPolicy::tree(const std::string& prompt_id) {
    auto it = trees_.find(prompt_id);
    if (it == trees_.end()) throw SimError("no policy tree for prompt " + prompt_id);
    return it->second;
}

const PromptTree& TabularPolicy::tree(const std::string& prompt_id) const {
    auto it = trees_.find(prompt_id);
    if (it == trees_.end()) throw SimError("no policy tree for prompt " + prompt_id);
    return it->second;
}

std::vector<Trajectory> enumerate_trajectories(const PromptSpec& prompt, const PromptTree& tree,
                                               long cap) {
    prompt.validate(cap);
    const int V = prompt.vocab, T = prompt.horizon;
    std::vector<Trajectory> out;
    out.reserve(static_cast<std::size_t>(prompt.trajectory_count()));

    std::vector<int> actions(T, 0);
    // Iterate sequences in lexicographic order.
    while (true) {
        double p = 1.0;
        std::vector<int> prefix;
        prefix.reserve(T);
        for (int t = 0; t < T; ++t) {
            p *= tree.probs(tree.node(prefix))(actions[t]);
            prefix.push_back(actions[t]);
        }
        out.push_back({actions, p, prompt.accept.count(actions) ? 1.0 : 0.0});
        int t = T - 1;
        while (t >= 0 && actions[t] == V - 1) actions[t--] = 0;
        if (t < 0) break;
        ++actions[t];
    }
    return out;
}

double nll(const PromptTree& tree, const PromptSpec& prompt, const std::vector<int>& actions) {
    if (static_cast<int>(actions.size()) != prompt.horizon)
        throw SimError("trajectory length does not match horizon");
    double sum = 0.0;
    std::vector<int> prefix;
    prefix.reserve(actions.size());
    for (int a : actions) {
        const Eigen::VectorXd row = tree.logits(tree.node(prefix));
        const Eigen::VectorXd shifted = row.array() - row.maxCoeff();
        const double logz = std::log(shifted.array().exp().sum());
        sum -= shifted(a) - logz;
        prefix.push_back(a);
    }
    return sum / static_cast<double>(prompt.horizon);
}

double conditional_nll(const PromptTree& tree, const PromptSpec& prompt) {
    double num = 0.0, mass = 0.0;
    for (const Trajectory& tr : enumerate_trajectories(prompt, tree)) {
        if (tr.reward <= 0.0) continue;
        num += tr.probability * nll(tree, prompt, tr.actions);
        mass += tr.probability;
    }
    if (mass <= 0.0)
        throw SimError(prompt.prompt_id + ": zero success probability, conditional NLL undefined");
    return num / mass;
}

}  // namespace contam::sim
