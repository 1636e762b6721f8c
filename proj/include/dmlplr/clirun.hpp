#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dmlplr/dataset.hpp"
#include "dmlplr/dml.hpp"

namespace dmlplr::cli {

// Resolved run configuration. Values come from built-in defaults, then the
// optional JSON config file, then command-line flags, in that order.
struct RunConfig {
    std::string command;  // ingest | summarize | estimate | simulate | report
    std::string data_path;
    std::string study_path;            // simulate
    std::vector<std::string> run_dirs; // report
    std::string out_dir;

    OutcomeKind outcome = OutcomeKind::LDA;
    TreatmentGranularity granularity = TreatmentGranularity::Any;
    std::string learner_g = "rf-g";
    std::string learner_m = "rf-m";
    int folds = 5;
    int reps = 2;
    DmlAlgorithm algorithm = DmlAlgorithm::Dml1;
    double alpha = 0.05;
    int bootstrap_B = 2000;
    uint64_t seed = 0;
    bool include_intcov = false;
    bool stratify_folds = false;
    char delimiter = ',';
    int workers = 0;  // 0: DMLPLR_WORKERS env, then hardware

    void validate() const;
};

// Column declarations for the bundled firm-year CSV schema (data/README.md).
const std::vector<ColumnDecl>& firm_year_schema();

// Applies JSON config-file values onto a RunConfig (flags override later).
void apply_config_file(RunConfig& config, const std::string& path);

int run_ingest(const RunConfig& config);
int run_summarize(const RunConfig& config);
int run_estimate(const RunConfig& config);
int run_simulate(const RunConfig& config);
int run_report(const RunConfig& config);

int dispatch(const RunConfig& config);

// enum <-> text helpers shared by flags, config files and artifacts
std::string granularity_name(TreatmentGranularity g);
TreatmentGranularity parse_granularity(const std::string& name);
std::string outcome_name(OutcomeKind o);
OutcomeKind parse_outcome(const std::string& name);
std::string algorithm_name(DmlAlgorithm a);
DmlAlgorithm parse_algorithm(const std::string& name);

} // namespace dmlplr::cli
