// Command-line front end: record validation, detector scoring, AUROC
// reporting, the tabular RL simulator, and the drift-theorem check.

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "contam/detectors.hpp"
#include "contam/ingest.hpp"
#include "contam/metrics.hpp"
#include "contam/sim/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kDomainFailure = 1;
constexpr int kUsageError = 2;

// Bad flag values and unknown names, as opposed to bad input data.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw contam::Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_output(const std::string& out_path, const std::string& text) {
    if (out_path.empty() || out_path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw contam::Error("cannot write " + out_path);
    out << text;
}

// --orientation overrides: "lira=lower,loss=higher"
std::map<contam::Method, contam::Orientation> parse_orientations(const std::string& spec) {
    std::map<contam::Method, contam::Orientation> out;
    if (spec.empty()) return out;
    for (const std::string& pair : split(spec, ',')) {
        const auto eq = pair.find('=');
        if (eq == std::string::npos)
            throw contam::Error("orientation override must look like method=higher|lower");
        const contam::Method m = contam::method_from_string(pair.substr(0, eq));
        const std::string dir = pair.substr(eq + 1);
        if (dir == "higher") out[m] = contam::Orientation::higher_is_member;
        else if (dir == "lower") out[m] = contam::Orientation::lower_is_member;
        else throw contam::Error("orientation must be higher or lower");
    }
    return out;
}

int cmd_validate(const std::string& input) {
    std::vector<contam::QuestionRecord> records;
    try {
        records = contam::parse_records(input);
    } catch (const contam::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kDomainFailure;
    } catch (const contam::Error& e) {
        std::cerr << e.what() << "\n";
        return kUsageError;
    }
    std::size_t violations = 0;
    for (const contam::QuestionRecord& r : records)
        for (const std::string& v : contam::validate_record(r)) {
            std::cout << v << "\n";
            ++violations;
        }
    return violations == 0 ? kOk : kDomainFailure;
}

int cmd_score(const std::string& input, const std::string& out_path,
              const std::string& methods_arg, double k_percent, double alpha,
              const std::string& span_arg) {
    contam::SpanKind span{};
    std::vector<contam::Method> methods;
    try {
        span = contam::span_from_string(span_arg);
        for (const std::string& name : split(methods_arg, ','))
            methods.push_back(contam::method_from_string(name));
        if (methods.empty()) throw contam::Error("no methods requested");
        if (k_percent <= 0.0 || k_percent > 100.0) throw contam::Error("k must lie in (0, 100]");
        if (alpha < 0.0 || alpha > 1.0) throw contam::Error("alpha must lie in [0, 1]");
    } catch (const contam::Error& e) {
        throw UsageError(e.what());
    }
    const std::vector<contam::QuestionRecord> records = contam::parse_records(input);

    std::ostringstream csv;
    csv << "question_id,benchmark,membership,stage,method,span,value,n_rollouts\n";
    csv << std::setprecision(10);
    std::size_t skipped = 0;
    std::map<contam::Method, std::size_t> rows_per_method;
    for (const contam::Method method : methods) {
        contam::DetectorConfig config;
        config.method = method;
        config.k_percent = k_percent;
        config.alpha = alpha;
        config.span = span;
        for (const contam::QuestionRecord& record : records) {
            if (record.rollouts.empty() && method != contam::Method::verbatim) {
                std::cerr << "warning: " << record.question_id << ": no rollouts, skipped\n";
                ++skipped;
                continue;
            }
            try {
                const contam::QuestionScore qs = contam::score_question(record, config);
                csv << qs.question_id << ',' << qs.benchmark << ','
                    << contam::to_string(qs.membership) << ',' << qs.stage << ','
                    << contam::to_string(qs.method) << ',' << contam::to_string(qs.span) << ','
                    << qs.value << ',' << qs.n_rollouts << '\n';
                ++rows_per_method[method];
            } catch (const contam::Error& e) {
                std::cerr << "warning: " << contam::to_string(method) << " skipped "
                          << record.question_id << ": " << e.what() << "\n";
                ++skipped;
            }
        }
    }
    if (skipped) std::cerr << skipped << " question/method pairs skipped\n";
    for (const contam::Method method : methods)
        if (rows_per_method[method] == 0) {
            std::cerr << "error: no scorable questions for method " << contam::to_string(method)
                      << "\n";
            return kDomainFailure;
        }
    write_output(out_path, csv.str());
    return kOk;
}

struct ScoreRow {
    std::string question_id, benchmark, membership, stage, method;
    double value = 0.0;
};

std::vector<ScoreRow> read_score_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw contam::Error("cannot open " + path);
    std::vector<ScoreRow> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        const std::vector<std::string> f = split(line, ',');
        if (f.size() < 8) throw contam::Error("bad score CSV row: " + line);
        rows.push_back({f[0], f[1], f[2], f[3], f[4], std::stod(f[6])});
    }
    return rows;
}

int cmd_auroc(const std::string& input, const std::string& out_path, const std::string& group_by,
              const std::string& baseline_stage, const std::string& orientation_arg,
              const std::string& format) {
    std::map<contam::Method, contam::Orientation> overrides;
    try {
        overrides = parse_orientations(orientation_arg);
        if (group_by != "benchmark" && group_by != "none")
            throw contam::Error("group-by must be \"benchmark\" or \"none\"");
    } catch (const contam::Error& e) {
        throw UsageError(e.what());
    }
    const std::vector<ScoreRow> rows = read_score_csv(input);

    // (benchmark, method, stage) -> member/nonmember score lists.
    std::map<std::tuple<std::string, std::string, std::string>,
             std::pair<std::vector<double>, std::vector<double>>>
        groups;
    for (const ScoreRow& r : rows) {
        const std::string bench = group_by == "none" ? "all" : r.benchmark;
        auto& g = groups[{bench, r.method, r.stage}];
        (r.membership == "member" ? g.first : g.second).push_back(r.value);
    }

    std::vector<contam::AurocResult> results;
    for (const auto& [key, g] : groups) {
        const auto& [bench, method, stage] = key;
        if (g.first.empty() || g.second.empty()) {
            std::cerr << "warning: group (" << bench << ", " << method << ", " << stage
                      << ") is one-sided, skipped\n";
            continue;
        }
        const contam::Method m = contam::method_from_string(method);
        auto it = overrides.find(m);
        const contam::Orientation o =
            it != overrides.end() ? it->second : contam::default_orientation(m);
        results.push_back({bench, method, stage, contam::auroc(g.first, g.second, o),
                           static_cast<int>(g.first.size()), static_cast<int>(g.second.size())});
    }
    if (results.empty()) {
        std::cerr << "error: no two-sided groups\n";
        return kDomainFailure;
    }
    std::vector<contam::StageDelta> deltas;
    if (!baseline_stage.empty()) deltas = contam::stage_delta(results, baseline_stage);
    const contam::ReportFormat fmt =
        format == "markdown" ? contam::ReportFormat::markdown : contam::ReportFormat::csv;
    write_output(out_path, contam::build_report(results, deltas, fmt));
    return kOk;
}

int cmd_simulate(const std::string& config_path, const std::string& out_path,
                 std::optional<std::uint64_t> seed, std::optional<int> steps) {
    namespace sim = contam::sim;
    sim::ExperimentConfig cfg = sim::parse_experiment_config(read_file(config_path));
    if (seed) cfg.algorithm.seed = *seed;
    if (steps) cfg.steps = *steps;

    const sim::Scenario scenario = sim::make_scenario(cfg.scenario);
    const sim::ExperimentResult result = sim::run_experiment(scenario, cfg.algorithm, cfg.steps);
    write_output(out_path, sim::experiment_csv(result));

    nlohmann::json summary;
    summary["algorithm"] = sim::to_string(cfg.algorithm.algorithm);
    summary["steps"] = cfg.steps;
    summary["clipping"] = cfg.algorithm.clipping_enabled;
    summary["importance_sampling"] = cfg.algorithm.importance_sampling_enabled;
    summary["initial_gap"] = result.initial_gap;
    summary["final_gap"] = result.final_gap();
    summary["gap_ratio"] = result.final_gap() / result.initial_gap;
    std::cout << summary.dump(2) << "\n";
    return kOk;
}

int cmd_theorem_check(double eta, int halvings, int instances, std::uint64_t seed) {
    namespace sim = contam::sim;
    const sim::TaylorSummary summary = sim::taylor_ladder(instances, 3, 4, eta, halvings, seed);
    std::cout << "eta,mean_max_abs_error\n" << std::setprecision(10);
    for (const sim::TaylorPoint& p : summary.points)
        std::cout << p.eta << ',' << p.max_abs_error << "\n";
    std::cout << "mean decay ratio: " << summary.mean_ratio << "\n";
    const bool pass = summary.mean_ratio >= 3.2 && summary.mean_ratio <= 4.8;
    std::cout << (pass ? "PASS" : "FAIL") << " (quadratic residual expects ratio in [3.2, 4.8])\n";
    return pass ? kOk : kDomainFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contamination-detection scoring and tabular RL drift simulator"};
    app.require_subcommand(1);

    std::string input, out_path, methods = "loss", span = "response", orientation;
    std::string group_by = "benchmark", baseline_stage, config_path, format = "csv";
    double k_percent = 20.0, alpha = 0.5, eta = 0.02;
    int halvings = 3, instances = 10;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int steps = -1;

    CLI::App* validate = app.add_subcommand("validate", "Validate a record file");
    validate->add_option("--input", input)->required();

    CLI::App* score = app.add_subcommand("score", "Compute detection scores");
    score->add_option("--input", input)->required();
    score->add_option("--out", out_path);
    score->add_option("--methods", methods, "Comma-separated method list");
    score->add_option("--k", k_percent, "K%% for the min/max-k family");
    score->add_option("--alpha", alpha, "CDD similarity window");
    score->add_option("--span", span, "Token span to score");

    CLI::App* auroc_cmd = app.add_subcommand("auroc", "AUROC tables from a score CSV");
    auroc_cmd->add_option("--input", input)->required();
    auroc_cmd->add_option("--out", out_path);
    auroc_cmd->add_option("--group-by", group_by, "benchmark (default) or none");
    auroc_cmd->add_option("--baseline-stage", baseline_stage);
    auroc_cmd->add_option("--orientation", orientation, "method=higher|lower overrides");
    auroc_cmd->add_option("--format", format)->check(CLI::IsMember({"csv", "markdown"}));

    CLI::App* report = app.add_subcommand("report", "Markdown AUROC report from a score CSV");
    report->add_option("--input", input)->required();
    report->add_option("--out", out_path);
    report->add_option("--group-by", group_by);
    report->add_option("--baseline-stage", baseline_stage);
    report->add_option("--orientation", orientation);

    CLI::App* simulate = app.add_subcommand("simulate", "Run a tabular RL experiment");
    simulate->add_option("--config", config_path)->required();
    simulate->add_option("--out", out_path);
    simulate->add_option("--seed", seed)->each([&](const std::string&) { seed_set = true; });
    simulate->add_option("--steps", steps);

    CLI::App* theorem = app.add_subcommand("theorem-check", "Drift-decomposition order check");
    theorem->add_option("--eta", eta);
    theorem->add_option("--halvings", halvings);
    theorem->add_option("--instances", instances);
    theorem->add_option("--seed", seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsageError;
    }

    try {
        if (validate->parsed()) return cmd_validate(input);
        if (score->parsed())
            return cmd_score(input, out_path, methods, k_percent, alpha, span);
        if (auroc_cmd->parsed())
            return cmd_auroc(input, out_path, group_by, baseline_stage, orientation, format);
        if (report->parsed())
            return cmd_auroc(input, out_path, group_by, baseline_stage, orientation, "markdown");
        if (simulate->parsed())
            return cmd_simulate(config_path, out_path,
                                seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt,
                                steps >= 0 ? std::optional<int>(steps) : std::nullopt);
        if (theorem->parsed()) {
            if (eta <= 0.0 || halvings < 2) {
                std::cerr << "error: eta must be > 0 and halvings >= 2\n";
                return kUsageError;
            }
            return cmd_theorem_check(eta, halvings, instances, seed);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const contam::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kDomainFailure;
    } catch (const contam::SimError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const contam::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDomainFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    }
    return kUsageError;
}
