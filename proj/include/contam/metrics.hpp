#pragma once

#include <string>
#include <vector>

#include "contam/detectors.hpp"

namespace contam {

struct AurocResult {
    std::string benchmark;
    std::string method;
    std::string stage;
    double auroc = 0.0;  // in [0, 1]
    int n_members = 0;
    int n_nonmembers = 0;
};

struct StageDelta {
    std::string benchmark;
    std::string method;
    std::string stage;
    std::string baseline_stage;
    double delta = 0.0;  // percentage points
};

enum class ReportFormat { csv, markdown };

// Mann-Whitney AUROC: probability that a random member score exceeds a
// random non-member score, ties counted half. Computed by midranks;
// equals the all-pairs definition exactly. lower_is_member negates
// both sides first.
double auroc(const std::vector<double>& member_scores,
             const std::vector<double>& nonmember_scores,
             Orientation orientation = Orientation::higher_is_member);

// Per (benchmark, method, stage) AUROC difference against the
// baseline stage, in percentage points. Throws when a baseline row is
// missing for a (benchmark, method) pair.
std::vector<StageDelta> stage_delta(const std::vector<AurocResult>& results,
                                    const std::string& baseline_stage);

// Deterministic table of results and deltas. Markdown layout: one row
// per (method, stage), one column per benchmark, then Avg. and Delta.
std::string build_report(const std::vector<AurocResult>& results,
                         const std::vector<StageDelta>& deltas, ReportFormat format);

}  // namespace contam
