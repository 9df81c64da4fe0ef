#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "contam/errors.hpp"
#include "contam/ingest.hpp"

namespace contam::sim {

// Default enumeration cap on V^T.
inline constexpr long kDefaultTrajectoryCap = 4096;

// One toy prompt: a complete V-ary action tree of depth T with a set
// of reward-1 action sequences.
struct PromptSpec {
    std::string prompt_id;
    Membership membership = Membership::nonmember;
    int vocab = 2;    // V >= 2
    int horizon = 1;  // T >= 1
    std::set<std::vector<int>> accept;  // sequences of length T, actions < V

    long trajectory_count() const;
    void validate(long cap = kDefaultTrajectoryCap) const;
};

// Softmax over a logit row.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// Per-prompt logit tree over every prefix of length < T. Nodes are
// indexed level by level: node(prefix) = (V^t - 1)/(V - 1) + base-V
// value of the prefix digits.
class PromptTree {
public:
    PromptTree() = default;
    PromptTree(int vocab, int horizon);

    int vocab() const { return vocab_; }
    int horizon() const { return horizon_; }
    int node_count() const { return static_cast<int>(rows_.size()); }

    int node(const std::vector<int>& prefix) const;
    // Node index of child `action` under `node` at depth `depth` (depth
    // of the parent, 0-based); -1 past the last level.
    int child(int node_index, int depth, int action) const;

    Eigen::VectorXd& logits(int node_index) { return rows_[node_index]; }
    const Eigen::VectorXd& logits(int node_index) const { return rows_[node_index]; }
    Eigen::VectorXd probs(int node_index) const { return softmax(rows_[node_index]); }

private:
    int vocab_ = 0;
    int horizon_ = 0;
    std::vector<int> level_offsets_;
    std::vector<Eigen::VectorXd> rows_;
};

// Softmax policy over a family of prompts, one logit tree each.
class TabularPolicy {
public:
    void add_prompt(const PromptSpec& spec) {
        trees_.emplace(spec.prompt_id, PromptTree(spec.vocab, spec.horizon));
    }
    PromptTree& tree(const std::string& prompt_id);
    const PromptTree& tree(const std::string& prompt_id) const;
    const std::map<std::string, PromptTree>& trees() const { return trees_; }

private:
    std::map<std::string, PromptTree> trees_;
};

struct Trajectory {
    std::vector<int> actions;
    double probability = 0.0;
    double reward = 0.0;
};

// All V^T trajectories with exact probabilities under the tree.
std::vector<Trajectory> enumerate_trajectories(const PromptSpec& prompt, const PromptTree& tree,
                                               long cap = kDefaultTrajectoryCap);

// Length-normalized negative log likelihood of one action sequence.
double nll(const PromptTree& tree, const PromptSpec& prompt, const std::vector<int>& actions);

// Expected NLL over reward-1 trajectories. Throws SimError when the
// success probability is zero.
double conditional_nll(const PromptTree& tree, const PromptSpec& prompt);

}  // namespace contam::sim
