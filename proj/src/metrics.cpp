#include "contam/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace contam {

double auroc(const std::vector<double>& member_scores,
             const std::vector<double>& nonmember_scores, Orientation orientation) {
    if (member_scores.empty() || nonmember_scores.empty())
        throw Error("auroc needs scores on both sides");
    const double sign = orientation == Orientation::lower_is_member ? -1.0 : 1.0;

    struct Obs { double score; bool member; };
    std::vector<Obs> all;
    all.reserve(member_scores.size() + nonmember_scores.size());
    for (double s : member_scores) all.push_back({sign * s, true});
    for (double s : nonmember_scores) all.push_back({sign * s, false});
    std::sort(all.begin(), all.end(), [](const Obs& a, const Obs& b) { return a.score < b.score; });

    // Midranks: tied scores share the average of their rank range, which
    // reproduces the half-credit tie convention of the pairwise count.
    double rank_sum_members = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (all[k].member) rank_sum_members += midrank;
        i = j;
    }
    const double nm = static_cast<double>(member_scores.size());
    const double nn = static_cast<double>(nonmember_scores.size());
    const double u = rank_sum_members - nm * (nm + 1.0) / 2.0;
    return u / (nm * nn);
}

namespace {

std::string fmt2(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

std::string fmt_full(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

}  // namespace

std::vector<StageDelta> stage_delta(const std::vector<AurocResult>& results,
                                    const std::string& baseline_stage) {
    std::map<std::pair<std::string, std::string>, double> baseline;
    for (const AurocResult& r : results)
        if (r.stage == baseline_stage) baseline[{r.benchmark, r.method}] = r.auroc;

    std::vector<StageDelta> out;
    for (const AurocResult& r : results) {
        auto it = baseline.find({r.benchmark, r.method});
        if (it == baseline.end())
            throw Error("no baseline stage \"" + baseline_stage + "\" for (" + r.benchmark + ", " +
                        r.method + ")");
        out.push_back({r.benchmark, r.method, r.stage, baseline_stage,
                       (r.auroc - it->second) * 100.0});
    }
    std::sort(out.begin(), out.end(), [](const StageDelta& a, const StageDelta& b) {
        return std::tie(a.benchmark, a.method, a.stage) < std::tie(b.benchmark, b.method, b.stage);
    });
    return out;
}

std::string build_report(const std::vector<AurocResult>& results,
                         const std::vector<StageDelta>& deltas, ReportFormat format) {
    std::vector<AurocResult> rows = results;
    std::sort(rows.begin(), rows.end(), [](const AurocResult& a, const AurocResult& b) {
        return std::tie(a.benchmark, a.method, a.stage) < std::tie(b.benchmark, b.method, b.stage);
    });

    std::ostringstream out;
    if (format == ReportFormat::csv) {
        out << "benchmark,method,stage,auroc,n_members,n_nonmembers,delta\n";
        std::map<std::tuple<std::string, std::string, std::string>, double> dmap;
        for (const StageDelta& d : deltas) dmap[{d.benchmark, d.method, d.stage}] = d.delta;
        for (const AurocResult& r : rows) {
            out << r.benchmark << ',' << r.method << ',' << r.stage << ',' << fmt_full(r.auroc)
                << ',' << r.n_members << ',' << r.n_nonmembers << ',';
            auto it = dmap.find({r.benchmark, r.method, r.stage});
            if (it != dmap.end()) out << fmt_full(it->second);
            out << '\n';
        }
        return out.str();
    }

    // Markdown: method/stage rows, benchmark columns, Avg., Delta.
    std::set<std::string> benchmarks;
    std::set<std::pair<std::string, std::string>> method_stages;
    std::map<std::tuple<std::string, std::string, std::string>, double> vals;
    for (const AurocResult& r : rows) {
        benchmarks.insert(r.benchmark);
        method_stages.insert({r.method, r.stage});
        vals[{r.benchmark, r.method, r.stage}] = r.auroc;
    }
    std::map<std::pair<std::string, std::string>, std::pair<double, int>> dsum;
    for (const StageDelta& d : deltas) {
        auto& acc = dsum[{d.method, d.stage}];
        acc.first += d.delta;
        acc.second += 1;
    }

    out << "| method | stage |";
    for (const std::string& b : benchmarks) out << ' ' << b << " |";
    out << " Avg. | Delta |\n|---|---|";
    for (std::size_t i = 0; i < benchmarks.size(); ++i) out << "---|";
    out << "---|---|\n";
    for (const auto& [method, stage] : method_stages) {
        out << "| " << method << " | " << stage << " |";
        double sum = 0.0;
        int n = 0;
        for (const std::string& b : benchmarks) {
            auto it = vals.find({b, method, stage});
            if (it == vals.end()) {
                out << " - |";
            } else {
                out << ' ' << fmt2(it->second * 100.0) << " |";
                sum += it->second * 100.0;
                ++n;
            }
        }
        out << ' ' << (n ? fmt2(sum / n) : std::string("-")) << " |";
        auto it = dsum.find({method, stage});
        out << ' ' << (it != dsum.end() ? fmt2(it->second.first / it->second.second)
                                        : std::string("-"))
            << " |\n";
    }
    return out.str();
}

}  // namespace contam
