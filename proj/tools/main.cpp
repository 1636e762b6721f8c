#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dmlplr/clirun.hpp"

namespace {

using dmlplr::cli::RunConfig;

// Flags land in optionals so config-file values survive unless overridden.
struct Flags {
    std::optional<std::string> config_path, data, study, out, outcome, granularity, learner_g,
        learner_m, algorithm, runs, delimiter;
    std::optional<int> folds, reps, bootstrap, workers;
    std::optional<double> alpha;
    std::optional<uint64_t> seed;
    bool include_intcov = false;
    bool stratify_folds = false;
};

void add_common(CLI::App* cmd, Flags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON config file (flags override)");
    cmd->add_option("--seed", flags.seed, "random seed");
    cmd->add_option("--workers", flags.workers, "worker threads (default: DMLPLR_WORKERS env)");
}

RunConfig resolve(const std::string& command, const Flags& flags) {
    RunConfig config;
    config.command = command;
    if (flags.config_path) dmlplr::cli::apply_config_file(config, *flags.config_path);

    if (flags.data) config.data_path = *flags.data;
    if (flags.study) config.study_path = *flags.study;
    if (flags.out) config.out_dir = *flags.out;
    if (flags.outcome) config.outcome = dmlplr::cli::parse_outcome(*flags.outcome);
    if (flags.granularity) config.granularity = dmlplr::cli::parse_granularity(*flags.granularity);
    if (flags.learner_g) config.learner_g = *flags.learner_g;
    if (flags.learner_m) config.learner_m = *flags.learner_m;
    if (flags.algorithm) config.algorithm = dmlplr::cli::parse_algorithm(*flags.algorithm);
    if (flags.folds) config.folds = *flags.folds;
    if (flags.reps) config.reps = *flags.reps;
    if (flags.bootstrap) config.bootstrap_B = *flags.bootstrap;
    if (flags.alpha) config.alpha = *flags.alpha;
    if (flags.seed) config.seed = *flags.seed;
    if (flags.workers) config.workers = *flags.workers;
    if (flags.include_intcov) config.include_intcov = true;
    if (flags.stratify_folds) config.stratify_folds = true;
    if (flags.delimiter) {
        if (flags.delimiter->size() != 1)
            throw CLI::ValidationError("--delimiter must be a single character");
        config.delimiter = (*flags.delimiter)[0];
    }
    if (flags.runs) {
        config.run_dirs.clear();
        std::string rest = *flags.runs;
        size_t pos;
        while ((pos = rest.find(',')) != std::string::npos) {
            config.run_dirs.push_back(rest.substr(0, pos));
            rest.erase(0, pos + 1);
        }
        if (!rest.empty()) config.run_dirs.push_back(rest);
    }
    return config;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"double machine learning for partially linear models with binary treatments"};
    app.require_subcommand(1);

    Flags flags;

    auto* ingest = app.add_subcommand("ingest", "filter and feature-engineer a firm-year CSV");
    ingest->add_option("--data", flags.data, "input CSV")->required();
    ingest->add_option("--out", flags.out, "output directory")->required();
    ingest->add_option("--outcome", flags.outcome, "LDA|LDMA");
    ingest->add_option("--granularity", flags.granularity, "any|invspec|broad|granular");
    ingest->add_option("--delimiter", flags.delimiter, "field delimiter (default ,)");
    ingest->add_flag("--include-intcov", flags.include_intcov,
                     "add interest coverage as a covariate (activates the interest filter)");
    add_common(ingest, flags);

    auto* summarize = app.add_subcommand("summarize", "outcome summary by treatment group");
    summarize->add_option("--data", flags.data, "input CSV")->required();
    summarize->add_option("--by", flags.granularity, "any|invspec|broad|granular")->required();
    summarize->add_option("--outcome", flags.outcome, "LDA|LDMA");
    summarize->add_option("--out", flags.out, "optional output directory");
    summarize->add_option("--delimiter", flags.delimiter, "field delimiter (default ,)");
    add_common(summarize, flags);

    auto* estimate = app.add_subcommand("estimate", "cross-fitted treatment effect estimation");
    estimate->add_option("--data", flags.data, "input CSV");
    estimate->add_option("--out", flags.out, "output directory");
    estimate->add_option("--outcome", flags.outcome, "LDA|LDMA");
    estimate->add_option("--granularity", flags.granularity, "any|invspec|broad|granular");
    estimate->add_option("--learner-g", flags.learner_g, "outcome learner preset");
    estimate->add_option("--learner-m", flags.learner_m, "propensity learner preset");
    estimate->add_option("--folds", flags.folds, "cross-fitting folds (default 5)");
    estimate->add_option("--reps", flags.reps, "cross-fitting repetitions (default 2)");
    estimate->add_option("--algorithm", flags.algorithm, "dml1|dml2");
    estimate->add_option("--alpha", flags.alpha, "joint confidence level alpha");
    estimate->add_option("--bootstrap", flags.bootstrap, "multiplier bootstrap draws");
    estimate->add_option("--delimiter", flags.delimiter, "field delimiter (default ,)");
    estimate->add_flag("--include-intcov", flags.include_intcov,
                       "add interest coverage as a covariate");
    estimate->add_flag("--stratify-folds", flags.stratify_folds,
                       "stratify fold assignment by treatment category");
    add_common(estimate, flags);

    auto* simulate = app.add_subcommand("simulate", "synthetic-data Monte Carlo study");
    simulate->add_option("--study", flags.study, "study config JSON")->required();
    simulate->add_option("--out", flags.out, "output directory")->required();
    add_common(simulate, flags);

    auto* report = app.add_subcommand("report", "summarize or compare estimate runs");
    report->add_option("--runs", flags.runs, "run directory, or two separated by a comma")
        ->required();
    report->add_option("--out", flags.out, "output directory")->required();
    add_common(report, flags);

    CLI11_PARSE(app, argc, argv);

    try {
        const std::string command = app.get_subcommands().front()->get_name();
        return dmlplr::cli::dispatch(resolve(command, flags));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
