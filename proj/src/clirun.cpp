#include "dmlplr/clirun.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "dmlplr/inference.hpp"
#include "dmlplr/parallel.hpp"
#include "dmlplr/rng.hpp"
#include "dmlplr/stats.hpp"
#include "dmlplr/synthetic.hpp"

namespace dmlplr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolName = "dmlplr";
constexpr const char* kToolVersion = "0.1.0";

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), format, v);
    return buf;
}
std::string fmt_full(double v) { return std::isfinite(v) ? fmt("%.17g", v) : std::string(); }
std::string fmt4(double v) { return std::isfinite(v) ? fmt("%.4f", v) : std::string(); }
std::string fmt3(double v) { return std::isfinite(v) ? fmt("%.3f", v) : std::string(); }
std::string fmt1(double v) { return std::isfinite(v) ? fmt("%.1f", v) : std::string(); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

std::string hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();
    char out[32];
    std::snprintf(out, sizeof(out), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// Names and schema
// ---------------------------------------------------------------------------

std::string granularity_name(TreatmentGranularity g) {
    switch (g) {
        case TreatmentGranularity::Any: return "any";
        case TreatmentGranularity::InvSpec: return "invspec";
        case TreatmentGranularity::Broad: return "broad";
        case TreatmentGranularity::Granular: return "granular";
    }
    return "any";
}

TreatmentGranularity parse_granularity(const std::string& name) {
    if (name == "any") return TreatmentGranularity::Any;
    if (name == "invspec") return TreatmentGranularity::InvSpec;
    if (name == "broad") return TreatmentGranularity::Broad;
    if (name == "granular") return TreatmentGranularity::Granular;
    throw std::invalid_argument("unknown granularity: " + name +
                                " (expected any|invspec|broad|granular)");
}

std::string outcome_name(OutcomeKind o) { return o == OutcomeKind::LDA ? "LDA" : "LDMA"; }

OutcomeKind parse_outcome(const std::string& name) {
    if (name == "LDA" || name == "lda") return OutcomeKind::LDA;
    if (name == "LDMA" || name == "ldma") return OutcomeKind::LDMA;
    throw std::invalid_argument("unknown outcome: " + name + " (expected LDA|LDMA)");
}

std::string algorithm_name(DmlAlgorithm a) { return a == DmlAlgorithm::Dml1 ? "dml1" : "dml2"; }

DmlAlgorithm parse_algorithm(const std::string& name) {
    if (name == "dml1") return DmlAlgorithm::Dml1;
    if (name == "dml2") return DmlAlgorithm::Dml2;
    throw std::invalid_argument("unknown algorithm: " + name + " (expected dml1|dml2)");
}

const std::vector<ColumnDecl>& firm_year_schema() {
    static const std::vector<ColumnDecl> schema = {
        {"gvkey", ColumnKind::Identifier}, {"fyear", ColumnKind::Identifier},
        {"conm", ColumnKind::Identifier},  {"sic", ColumnKind::Categorical},
        {"rating", ColumnKind::Categorical}, {"au", ColumnKind::Categorical},
        {"ceoso", ColumnKind::Categorical},
        {"sale", ColumnKind::Numeric},   {"at", ColumnKind::Numeric},
        {"dltt", ColumnKind::Numeric},   {"dlc", ColumnKind::Numeric},
        {"seq", ColumnKind::Numeric},    {"mkvalt", ColumnKind::Numeric},
        {"ebitda", ColumnKind::Numeric}, {"xint", ColumnKind::Numeric},
        {"ppent", ColumnKind::Numeric},  {"che", ColumnKind::Numeric},
        {"rect", ColumnKind::Numeric},   {"invt", ColumnKind::Numeric},
        {"act", ColumnKind::Numeric},    {"intan", ColumnKind::Numeric},
        {"capx", ColumnKind::Numeric},   {"oancf", ColumnKind::Numeric},
        {"ni", ColumnKind::Numeric},     {"re", ColumnKind::Numeric},
        {"cogs", ColumnKind::Numeric},   {"xsga", ColumnKind::Numeric},
        {"dp", ColumnKind::Numeric},     {"emp", ColumnKind::Numeric},
    };
    return schema;
}

// ---------------------------------------------------------------------------
// Config plumbing
// ---------------------------------------------------------------------------

void RunConfig::validate() const {
    if (folds < 2 || reps < 1) throw std::invalid_argument("need folds >= 2 and reps >= 1");
    if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("alpha must lie in (0,1)");
    if (bootstrap_B < 100) throw std::invalid_argument("bootstrap draws must be >= 100");
    if (workers < 0) throw std::invalid_argument("workers must be >= 0");
    learner_preset(learner_g);  // throws on unknown names
    learner_preset(learner_m);
}

void apply_config_file(RunConfig& config, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    json doc = json::parse(in);
    if (doc.contains("config")) doc = doc["config"];  // accept run manifests directly

    if (doc.contains("data")) config.data_path = doc["data"].get<std::string>();
    if (doc.contains("outcome")) config.outcome = parse_outcome(doc["outcome"].get<std::string>());
    if (doc.contains("granularity"))
        config.granularity = parse_granularity(doc["granularity"].get<std::string>());
    if (doc.contains("learner_g")) config.learner_g = doc["learner_g"].get<std::string>();
    if (doc.contains("learner_m")) config.learner_m = doc["learner_m"].get<std::string>();
    if (doc.contains("folds")) config.folds = doc["folds"].get<int>();
    if (doc.contains("reps")) config.reps = doc["reps"].get<int>();
    if (doc.contains("algorithm"))
        config.algorithm = parse_algorithm(doc["algorithm"].get<std::string>());
    if (doc.contains("alpha")) config.alpha = doc["alpha"].get<double>();
    if (doc.contains("bootstrap")) config.bootstrap_B = doc["bootstrap"].get<int>();
    if (doc.contains("seed")) config.seed = doc["seed"].get<uint64_t>();
    if (doc.contains("include_intcov")) config.include_intcov = doc["include_intcov"].get<bool>();
    if (doc.contains("stratify_folds")) config.stratify_folds = doc["stratify_folds"].get<bool>();
    if (doc.contains("delimiter")) {
        const auto d = doc["delimiter"].get<std::string>();
        if (d.size() != 1) throw std::invalid_argument("delimiter must be one character");
        config.delimiter = d[0];
    }
    if (doc.contains("workers")) config.workers = doc["workers"].get<int>();
}

namespace {

json config_json(const RunConfig& config) {
    return json{{"data", config.data_path},
                {"outcome", outcome_name(config.outcome)},
                {"granularity", granularity_name(config.granularity)},
                {"learner_g", config.learner_g},
                {"learner_m", config.learner_m},
                {"folds", config.folds},
                {"reps", config.reps},
                {"algorithm", algorithm_name(config.algorithm)},
                {"alpha", config.alpha},
                {"bootstrap", config.bootstrap_B},
                {"seed", config.seed},
                {"include_intcov", config.include_intcov},
                {"stratify_folds", config.stratify_folds},
                {"delimiter", std::string(1, config.delimiter)}};
}

void write_manifest(const RunConfig& config, const fs::path& out_dir) {
    json manifest{{"command", config.command},
                  {"config", config_json(config)},
                  {"tool", json{{"name", kToolName}, {"version", kToolVersion}}}};
    if (!config.data_path.empty()) manifest["input_fnv1a64"] = hash_file(config.data_path);
    write_json(out_dir / "manifest.json", manifest);
}

struct PreparedData {
    Dataset dataset;
    size_t raw_rows = 0;
    size_t filtered_rows = 0;
};

PreparedData prepare(const RunConfig& config) {
    if (config.data_path.empty()) throw std::invalid_argument("no --data file given");
    const RawTable raw = load_csv(config.data_path, firm_year_schema(), config.delimiter);

    FilterRules rules;
    if (config.include_intcov) rules.min_interest_expense_kusd = 10.0;
    const RawTable filtered = apply_sample_filters(raw, rules);

    FeatureConfig features = default_feature_config();
    features.outcome = config.outcome;
    features.granularity = config.granularity;
    features.include_intcov = config.include_intcov;

    PreparedData out;
    out.dataset = engineer_features(filtered, features);
    out.raw_rows = raw.row_count;
    out.filtered_rows = filtered.row_count;
    return out;
}

CrossFitPlan plan_for(const RunConfig& config, const Dataset& ds) {
    const uint64_t plan_seed = derive_seed(config.seed, 0x636c69706cULL);
    if (!config.stratify_folds)
        return make_plan(static_cast<int>(ds.n), config.folds, config.reps, plan_seed);
    std::vector<int> strata(static_cast<size_t>(ds.n), -1);
    for (Eigen::Index i = 0; i < ds.n; ++i)
        for (Eigen::Index j = 0; j < ds.treatments.cols(); ++j)
            if (ds.treatments(i, j) == 1.0) strata[static_cast<size_t>(i)] = static_cast<int>(j);
    return make_stratified_plan(static_cast<int>(ds.n), config.folds, config.reps, plan_seed,
                                strata);
}

std::vector<std::vector<std::string>> summary_records(const std::vector<SummaryRow>& rows) {
    std::vector<std::vector<std::string>> records;
    records.push_back({"group", "q1", "median", "mean", "q3", "count", "share"});
    for (const auto& row : rows) {
        if (row.has_stats)
            records.push_back({row.group, fmt_full(row.q1), fmt_full(row.median),
                               fmt_full(row.mean), fmt_full(row.q3), std::to_string(row.count),
                               fmt_full(row.share)});
        else
            records.push_back({row.group, "", "", "", "", std::to_string(row.count),
                               fmt_full(row.share)});
    }
    return records;
}

json summary_json(const std::vector<SummaryRow>& rows) {
    json arr = json::array();
    for (const auto& row : rows) {
        json r{{"group", row.group}, {"count", row.count}, {"share", row.share}};
        if (row.has_stats) {
            r["q1"] = row.q1;
            r["median"] = row.median;
            r["mean"] = row.mean;
            r["q3"] = row.q3;
        } else {
            r["q1"] = nullptr;
            r["median"] = nullptr;
            r["mean"] = nullptr;
            r["q3"] = nullptr;
        }
        arr.push_back(std::move(r));
    }
    return arr;
}

} // namespace

// ---------------------------------------------------------------------------
// ingest / summarize
// ---------------------------------------------------------------------------

int run_ingest(const RunConfig& config) {
    if (config.out_dir.empty()) throw std::invalid_argument("no --out directory given");
    const PreparedData prep = prepare(config);
    const Dataset& ds = prep.dataset;
    fs::create_directories(config.out_dir);

    std::vector<std::vector<std::string>> records;
    std::vector<std::string> header{"outcome"};
    for (const auto& name : ds.treatment_names) header.push_back("d:" + name);
    for (const auto& name : ds.covariate_names) header.push_back("x:" + name);
    records.push_back(header);
    for (Eigen::Index i = 0; i < ds.n; ++i) {
        std::vector<std::string> row{fmt_full(ds.outcome[i])};
        for (Eigen::Index j = 0; j < ds.treatments.cols(); ++j)
            row.push_back(ds.treatments(i, j) == 1.0 ? "1" : "0");
        for (Eigen::Index j = 0; j < ds.covariates.cols(); ++j)
            row.push_back(fmt_full(ds.covariates(i, j)));
        records.push_back(std::move(row));
    }
    csv::write_records((fs::path(config.out_dir) / "dataset.csv").string(), records);

    write_json(fs::path(config.out_dir) / "columns.json",
               json{{"outcome", outcome_name(config.outcome)},
                    {"granularity", granularity_name(config.granularity)},
                    {"treatments", ds.treatment_names},
                    {"covariates", ds.covariate_names},
                    {"rows_raw", prep.raw_rows},
                    {"rows_after_filters", prep.filtered_rows}});
    write_manifest(config, config.out_dir);

    std::cout << "ingested " << prep.raw_rows << " rows, " << prep.filtered_rows
              << " after filters, " << ds.covariates.cols() << " covariates, "
              << ds.treatments.cols() << " treatment columns\n";
    return 0;
}

int run_summarize(const RunConfig& config) {
    const PreparedData prep = prepare(config);
    const auto rows = summarize(prep.dataset);
    const auto records = summary_records(rows);

    for (const auto& record : records) {
        for (size_t i = 0; i < record.size(); ++i)
            std::cout << (i ? "," : "") << csv::escape_field(record[i]);
        std::cout << "\n";
    }
    if (!config.out_dir.empty()) {
        fs::create_directories(config.out_dir);
        csv::write_records((fs::path(config.out_dir) / "summary.csv").string(), records);
        write_json(fs::path(config.out_dir) / "summary.json", summary_json(rows));
        write_manifest(config, config.out_dir);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

namespace {

json fits_json(const MultiFitResult& result, const Dataset& ds, const RunConfig& config) {
    json arr = json::array();
    for (size_t j = 0; j < result.fits.size(); ++j) {
        const DmlFit& fit = result.fits[j];
        json reps = json::array();
        for (const auto& rep : fit.per_repetition)
            reps.push_back(json{{"theta", finite_or_null(rep.theta)},
                                {"se", finite_or_null(rep.se)}});
        long treated = 0;
        for (Eigen::Index i = 0; i < ds.n; ++i)
            if (ds.treatments(i, static_cast<Eigen::Index>(j)) == 1.0) ++treated;
        arr.push_back(json{{"treatment", fit.treatment_name},
                           {"theta", finite_or_null(fit.theta_hat)},
                           {"std_error", finite_or_null(fit.std_error)},
                           {"t_value", finite_or_null(fit.t_value)},
                           {"p_value", finite_or_null(fit.p_value)},
                           {"j_hat", finite_or_null(fit.j_hat)},
                           {"observations", treated},
                           {"share", static_cast<double>(treated) / static_cast<double>(ds.n)},
                           {"per_repetition", reps},
                           {"warnings", fit.warnings},
                           {"error", result.errors[j]}});
    }
    return json{{"n", ds.n},
                {"outcome", outcome_name(config.outcome)},
                {"granularity", granularity_name(config.granularity)},
                {"algorithm", algorithm_name(config.algorithm)},
                {"learner_g", config.learner_g},
                {"learner_m", config.learner_m},
                {"folds", config.folds},
                {"reps", config.reps},
                {"fits", arr}};
}

std::string weights_name(MultiplierWeights w) {
    switch (w) {
        case MultiplierWeights::Gaussian: return "gaussian";
        case MultiplierWeights::Rademacher: return "rademacher";
        case MultiplierWeights::Mammen: return "mammen";
    }
    return "gaussian";
}

} // namespace

int run_estimate(const RunConfig& config) {
    if (config.out_dir.empty()) throw std::invalid_argument("no --out directory given");
    config.validate();
    const PreparedData prep = prepare(config);
    const Dataset& ds = prep.dataset;
    const auto p_t = static_cast<size_t>(ds.treatments.cols());
    fs::create_directories(config.out_dir);
    const fs::path out(config.out_dir);

    const LearnerSpec g_spec = learner_preset(config.learner_g, derive_seed(config.seed, 0x676cULL));
    const LearnerSpec m_spec = learner_preset(config.learner_m, derive_seed(config.seed, 0x6d6cULL));
    const CrossFitPlan plan = plan_for(config, ds);

    std::vector<int> all_treatments(p_t);
    std::iota(all_treatments.begin(), all_treatments.end(), 0);
    const MultiFitResult result = fit_multi(ds, all_treatments, g_spec, m_spec, plan,
                                            config.algorithm, config.workers);

    // (a) per-treatment fit table, displayed at 4/3-decimal precision
    std::vector<std::vector<std::string>> fit_records;
    fit_records.push_back({"treatment", "coef", "std_error", "t_value", "p_value", "folds",
                           "reps", "algorithm", "learner_g", "learner_m"});
    for (const auto& fit : result.fits)
        fit_records.push_back({fit.treatment_name, fmt4(fit.theta_hat), fmt4(fit.std_error),
                               fmt1(fit.t_value), fmt3(fit.p_value), std::to_string(config.folds),
                               std::to_string(config.reps), algorithm_name(config.algorithm),
                               config.learner_g, config.learner_m});
    csv::write_records((out / "fit.csv").string(), fit_records);
    write_json(out / "fits.json", fits_json(result, ds, config));

    bool estimation_failed = false;
    for (size_t j = 0; j < result.errors.size(); ++j) {
        if (result.errors[j].empty()) continue;
        estimation_failed = true;
        std::cerr << "estimation failed for treatment '" << result.fits[j].treatment_name
                  << "': " << result.errors[j] << "\n";
    }
    for (const auto& fit : result.fits)
        for (const auto& warning : fit.warnings)
            std::cerr << "warning [" << fit.treatment_name << "]: " << warning << "\n";

    // (b) adjusted inference; the table artifact only exists for p > 1
    std::optional<AdjustedInference> adjusted;
    if (!estimation_failed) {
        adjusted = adjust_multi(result, config.bootstrap_B, config.alpha,
                                derive_seed(config.seed, 0x626f6f74ULL),
                                MultiplierWeights::Gaussian, config.workers);
        if (p_t > 1) {
            std::vector<std::vector<std::string>> records;
            records.push_back({"treatment", "coef", "mb_std_error", "mb_p", "rowo_p", "bonf_p",
                               "observations", "share"});
            for (size_t j = 0; j < p_t; ++j) {
                const auto ji = static_cast<Eigen::Index>(j);
                long treated = 0;
                for (Eigen::Index i = 0; i < ds.n; ++i)
                    if (ds.treatments(i, ji) == 1.0) ++treated;
                records.push_back({result.fits[j].treatment_name,
                                   fmt4(result.fits[j].theta_hat),
                                   fmt4(result.fits[j].std_error), fmt3(adjusted->mb_p[ji]),
                                   fmt3(adjusted->rowo_p[ji]), fmt3(adjusted->bonf_p[ji]),
                                   std::to_string(treated),
                                   fmt4(static_cast<double>(treated) / static_cast<double>(ds.n))});
            }
            csv::write_records((out / "inference.csv").string(), records);
        }
        json joint = json::array();
        for (size_t j = 0; j < p_t; ++j) {
            const auto ji = static_cast<Eigen::Index>(j);
            joint.push_back(json{{"treatment", adjusted->labels[j]},
                                 {"raw_p", adjusted->raw_p[ji]},
                                 {"mb_p", adjusted->mb_p[ji]},
                                 {"rowo_p", adjusted->rowo_p[ji]},
                                 {"holm_p", adjusted->holm_p[ji]},
                                 {"bonf_p", adjusted->bonf_p[ji]},
                                 {"joint_lo", adjusted->joint_ci(ji, 0)},
                                 {"joint_hi", adjusted->joint_ci(ji, 1)}});
        }
        write_json(out / "inference.json",
                   json{{"alpha", adjusted->alpha},
                        {"bootstrap", adjusted->B},
                        {"weights", weights_name(adjusted->weight_scheme)},
                        {"critical_value", adjusted->critical_value},
                        {"treatments", joint}});
    }

    // (c) bar-chart plot data
    std::vector<std::vector<std::string>> plot;
    plot.push_back({"label", "estimate", "mb_p"});
    for (size_t j = 0; j < p_t; ++j)
        plot.push_back({result.fits[j].treatment_name, fmt_full(result.fits[j].theta_hat),
                        adjusted ? fmt_full(adjusted->mb_p[static_cast<Eigen::Index>(j)])
                                 : std::string()});
    csv::write_records((out / "plot_effects.csv").string(), plot);

    // (d) manifest
    write_manifest(config, out);

    std::cout << "estimated " << p_t << " treatment effect(s) on " << ds.n << " observations ("
              << outcome_name(config.outcome) << ", " << granularity_name(config.granularity)
              << ", " << algorithm_name(config.algorithm) << ")\n";
    for (const auto& fit : result.fits)
        std::cout << "  " << fit.treatment_name << ": theta=" << fmt4(fit.theta_hat)
                  << " se=" << fmt4(fit.std_error) << " p=" << fmt3(fit.p_value) << "\n";
    return estimation_failed ? 1 : 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

namespace {

using synthetic::DgpConfig;
using synthetic::EstimatorKind;
using synthetic::EstimatorSpec;
using synthetic::FunctionShape;
using synthetic::McReport;
using synthetic::StudyConfig;
using synthetic::TreatmentMechanism;

FunctionShape parse_shape(const std::string& name) {
    if (name == "linear") return FunctionShape::Linear;
    if (name == "nonlinear-smooth") return FunctionShape::NonlinearSmooth;
    if (name == "step") return FunctionShape::Step;
    throw std::invalid_argument("unknown shape: " + name);
}

LearnerSpec parse_learner(const json& node) {
    if (node.is_string()) return learner_preset(node.get<std::string>());
    LearnerSpec spec = learner_preset(node.at("preset").get<std::string>());
    if (node.contains("num_trees")) spec.num_trees = node["num_trees"].get<int>();
    if (node.contains("mtry")) spec.mtry = node["mtry"].get<int>();
    if (node.contains("min_node_size")) spec.min_node_size = node["min_node_size"].get<int>();
    if (node.contains("max_depth")) spec.max_depth = node["max_depth"].get<int>();
    if (node.contains("lambda")) spec.lambda = node["lambda"].get<double>();
    return spec;
}

StudyConfig parse_study(const json& doc) {
    StudyConfig study;
    const json& dgp = doc.at("dgp");
    study.dgp.n = dgp.at("n").get<int>();
    study.dgp.p_covariates = dgp.at("p_covariates").get<int>();
    study.dgp.theta_true = dgp.at("theta_true").get<std::vector<double>>();
    if (dgp.contains("g_shape")) study.dgp.g_shape = parse_shape(dgp["g_shape"].get<std::string>());
    if (dgp.contains("m_shape")) study.dgp.m_shape = parse_shape(dgp["m_shape"].get<std::string>());
    if (dgp.contains("confounding_strength"))
        study.dgp.confounding_strength = dgp["confounding_strength"].get<double>();
    if (dgp.contains("noise_sd_y")) study.dgp.noise_sd_y = dgp["noise_sd_y"].get<double>();
    if (dgp.contains("mechanism")) {
        const auto m = dgp["mechanism"].get<std::string>();
        if (m == "single-binary") study.dgp.mechanism = TreatmentMechanism::SingleBinary;
        else if (m == "mutually-exclusive-categorical")
            study.dgp.mechanism = TreatmentMechanism::MutuallyExclusiveCategorical;
        else throw std::invalid_argument("unknown mechanism: " + m);
    }
    if (dgp.contains("treatment_intercept"))
        study.dgp.treatment_intercept = dgp["treatment_intercept"].get<double>();

    for (const json& e : doc.at("estimators")) {
        EstimatorSpec est;
        est.label = e.at("label").get<std::string>();
        const auto kind = e.value("kind", std::string("dml"));
        if (kind == "dml") est.kind = EstimatorKind::Dml;
        else if (kind == "naive") est.kind = EstimatorKind::Naive;
        else if (kind == "fixed") est.kind = EstimatorKind::Fixed;
        else throw std::invalid_argument("unknown estimator kind: " + kind);
        if (e.contains("algorithm")) est.algorithm = parse_algorithm(e["algorithm"].get<std::string>());
        if (e.contains("learner_g")) est.g = parse_learner(e["learner_g"]);
        if (e.contains("learner_m")) est.m = parse_learner(e["learner_m"]);
        if (e.contains("K")) est.K = e["K"].get<int>();
        if (e.contains("R")) est.R = e["R"].get<int>();
        study.estimators.push_back(std::move(est));
    }

    study.reps = doc.at("reps").get<int>();
    study.seed = doc.value("seed", 0ULL);
    study.alpha = doc.value("alpha", 0.05);
    study.bootstrap_B = doc.value("bootstrap", 0);
    return study;
}

const synthetic::EstimatorSummary* find_estimator(const McReport& report,
                                                  const std::string& label) {
    for (const auto& s : report.estimators)
        if (s.label == label) return &s;
    return nullptr;
}

struct CheckOutcome {
    std::string text;
    bool passed = false;
};

std::vector<CheckOutcome> evaluate_checks(const json& checks, const McReport& report,
                                          const StudyConfig& study) {
    std::vector<CheckOutcome> outcomes;
    auto targets = [&](const json& check) {
        std::vector<const synthetic::EstimatorSummary*> out;
        if (check.contains("estimator")) {
            const auto* s = find_estimator(report, check["estimator"].get<std::string>());
            if (!s) throw std::invalid_argument("check names unknown estimator: " +
                                                check["estimator"].get<std::string>());
            out.push_back(s);
        } else {
            for (const auto& s : report.estimators) out.push_back(&s);
        }
        return out;
    };

    for (const json& check : checks) {
        const auto type = check.at("type").get<std::string>();
        if (type == "abs_bias_max") {
            const double cap = check.at("value").get<double>();
            for (const auto* s : targets(check)) {
                const bool ok = std::isfinite(s->mean_bias) && std::abs(s->mean_bias) <= cap;
                outcomes.push_back({s->label + ": |mean bias| " + fmt4(std::abs(s->mean_bias)) +
                                        " <= " + fmt4(cap),
                                    ok});
            }
        } else if (type == "coverage_range") {
            const double lo = check.at("min").get<double>();
            const double hi = check.at("max").get<double>();
            for (const auto* s : targets(check)) {
                const bool ok = s->has_coverage && s->coverage >= lo && s->coverage <= hi;
                outcomes.push_back({s->label + ": coverage " + fmt4(s->coverage) + " in [" +
                                        fmt4(lo) + ", " + fmt4(hi) + "]",
                                    ok});
            }
        } else if (type == "naive_vs_dml") {
            const auto* naive = find_estimator(report, check.at("naive").get<std::string>());
            const auto* dml = find_estimator(report, check.at("dml").get<std::string>());
            if (!naive || !dml) throw std::invalid_argument("naive_vs_dml names unknown estimators");
            const double min_win = check.value("min_win_frac", 0.9);
            const double min_ratio = check.value("min_mean_ratio", 3.0);
            size_t ni = 0, di = 0;
            for (size_t e = 0; e < study.estimators.size(); ++e) {
                if (study.estimators[e].label == naive->label) ni = e;
                if (study.estimators[e].label == dml->label) di = e;
            }
            long wins = 0, total = 0;
            double naive_abs = 0, dml_abs = 0;
            for (const auto& rec : report.rep_records) {
                if (!rec.errors[ni].empty() || !rec.errors[di].empty()) continue;
                for (size_t j = 0; j < study.dgp.theta_true.size(); ++j) {
                    if (!rec.cells[ni][j].ok || !rec.cells[di][j].ok) continue;
                    const double en = std::abs(rec.cells[ni][j].theta - study.dgp.theta_true[j]);
                    const double ed = std::abs(rec.cells[di][j].theta - study.dgp.theta_true[j]);
                    ++total;
                    if (en > ed) ++wins;
                    naive_abs += en;
                    dml_abs += ed;
                }
            }
            const double win_frac = total > 0 ? static_cast<double>(wins) / total : 0;
            const double ratio = dml_abs > 0 ? naive_abs / dml_abs : 0;
            outcomes.push_back({"naive beats dml in error on " + fmt4(win_frac) +
                                    " of reps (need >= " + fmt4(min_win) + ")",
                                win_frac >= min_win});
            outcomes.push_back({"mean |naive bias| / |dml bias| = " + fmt4(ratio) +
                                    " (need >= " + fmt4(min_ratio) + ")",
                                ratio >= min_ratio});
        } else if (type == "fwer_max") {
            const double cap = check.at("value").get<double>();
            const auto method = check.value("method", std::string("mb"));
            for (const auto* s : targets(check)) {
                double fwer = s->fwer_mb;
                if (method == "bonferroni") fwer = s->fwer_bonf;
                else if (method == "holm") fwer = s->fwer_holm;
                else if (method == "romano-wolf") fwer = s->fwer_rowo;
                else if (method == "raw") fwer = s->fwer_raw;
                const bool ok = s->has_fwer && fwer <= cap;
                outcomes.push_back({s->label + ": " + method + " FWER " + fmt4(fwer) +
                                        " <= " + fmt4(cap),
                                    ok});
            }
        } else if (type == "joint_coverage_min") {
            const double floor_v = check.at("value").get<double>();
            for (const auto* s : targets(check)) {
                const bool ok = s->has_joint && s->joint_coverage >= floor_v;
                outcomes.push_back({s->label + ": joint coverage " + fmt4(s->joint_coverage) +
                                        " >= " + fmt4(floor_v),
                                    ok});
            }
        } else if (type == "ordering_min") {
            const double floor_v = check.at("value").get<double>();
            for (const auto* s : targets(check)) {
                const bool ok = s->ordering_pairs > 0 && s->ordering_correct_frac >= floor_v;
                outcomes.push_back({s->label + ": ordering " + fmt4(s->ordering_correct_frac) +
                                        " >= " + fmt4(floor_v) + " over " +
                                        std::to_string(s->ordering_pairs) + " pairs",
                                    ok});
            }
        } else {
            throw std::invalid_argument("unknown check type: " + type);
        }
    }
    return outcomes;
}

json mc_report_json(const McReport& report) {
    json estimators = json::array();
    for (const auto& s : report.estimators) {
        json bias = json::array();
        for (double b : s.mean_bias_by_treatment) bias.push_back(finite_or_null(b));
        json e{{"label", s.label},
               {"mean_bias", finite_or_null(s.mean_bias)},
               {"mean_bias_by_treatment", bias},
               {"rmse", finite_or_null(s.rmse)},
               {"failures", s.failures}};
        if (s.has_coverage) {
            e["coverage"] = s.coverage;
            e["mean_ci_length"] = s.mean_ci_length;
        }
        if (s.has_fwer) {
            e["fwer_mb"] = s.fwer_mb;
            e["fwer_rowo"] = s.fwer_rowo;
            e["fwer_holm"] = s.fwer_holm;
            e["fwer_bonf"] = s.fwer_bonf;
            e["fwer_raw"] = s.fwer_raw;
        }
        if (s.has_joint) e["joint_coverage"] = s.joint_coverage;
        if (s.ordering_pairs > 0) {
            e["ordering_correct_frac"] = s.ordering_correct_frac;
            e["ordering_pairs"] = s.ordering_pairs;
        }
        estimators.push_back(std::move(e));
    }
    return json{{"reps", report.reps},
                {"failure_count", report.failure_count},
                {"flags", report.flags},
                {"estimators", estimators}};
}

} // namespace

int run_simulate(const RunConfig& config) {
    if (config.study_path.empty()) throw std::invalid_argument("no --study config given");
    if (config.out_dir.empty()) throw std::invalid_argument("no --out directory given");

    std::ifstream in(config.study_path);
    if (!in) throw std::runtime_error("cannot open study config: " + config.study_path);
    const json doc = json::parse(in);
    const StudyConfig study = parse_study(doc);

    const McReport report =
        study.dgp.mechanism == TreatmentMechanism::MutuallyExclusiveCategorical &&
                study.bootstrap_B > 0
            ? synthetic::heterogeneity_study(study, config.workers)
            : synthetic::run_study(study, config.workers);

    fs::create_directories(config.out_dir);
    const fs::path out(config.out_dir);
    write_json(out / "mcreport.json", mc_report_json(report));

    std::vector<std::vector<std::string>> records;
    records.push_back({"estimator", "reps", "failures", "mean_bias", "rmse", "coverage",
                       "mean_ci_length", "fwer_mb", "fwer_bonf", "joint_coverage",
                       "ordering_correct_frac"});
    for (const auto& s : report.estimators)
        records.push_back({s.label, std::to_string(report.reps), std::to_string(s.failures),
                           fmt_full(s.mean_bias), fmt_full(s.rmse),
                           s.has_coverage ? fmt_full(s.coverage) : "",
                           s.has_coverage ? fmt_full(s.mean_ci_length) : "",
                           s.has_fwer ? fmt_full(s.fwer_mb) : "",
                           s.has_fwer ? fmt_full(s.fwer_bonf) : "",
                           s.has_joint ? fmt_full(s.joint_coverage) : "",
                           s.ordering_pairs > 0 ? fmt_full(s.ordering_correct_frac) : ""});
    csv::write_records((out / "mcreport.csv").string(), records);

    {
        RunConfig manifest_config = config;
        manifest_config.data_path.clear();
        json manifest{{"command", "simulate"},
                      {"study", doc},
                      {"study_fnv1a64", hash_file(config.study_path)},
                      {"tool", json{{"name", kToolName}, {"version", kToolVersion}}}};
        write_json(out / "manifest.json", manifest);
    }

    std::cout << "study complete: " << report.reps << " reps, " << report.failure_count
              << " failures, runtime " << fmt1(report.runtime_seconds) << "s\n";
    for (const auto& flag : report.flags) std::cout << "flag: " << flag << "\n";

    bool all_passed = true;
    if (doc.contains("checks")) {
        for (const auto& outcome : evaluate_checks(doc["checks"], report, study)) {
            std::cout << (outcome.passed ? "PASS " : "FAIL ") << outcome.text << "\n";
            all_passed = all_passed && outcome.passed;
        }
    }
    for (const auto& flag : report.flags) {
        if (flag.find("failure rate above 2%") != std::string::npos) {
            std::cout << "FAIL " << flag << "\n";
            all_passed = false;
        }
    }
    return all_passed ? 0 : 1;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

namespace {

struct RunSeries {
    std::string name;
    std::vector<std::string> labels;
    std::vector<double> estimates;
    std::vector<double> mb_p;
};

RunSeries load_series(const std::string& dir) {
    RunSeries series;
    series.name = fs::path(dir).filename().string();
    std::ifstream fits_in(fs::path(dir) / "fits.json");
    if (!fits_in) throw std::runtime_error("no fits.json under " + dir);
    const json fits = json::parse(fits_in);
    std::map<std::string, double> mb;
    {
        std::ifstream inf_in(fs::path(dir) / "inference.json");
        if (inf_in) {
            const json inf = json::parse(inf_in);
            for (const auto& t : inf.at("treatments"))
                mb[t.at("treatment").get<std::string>()] = t.at("mb_p").get<double>();
        }
    }
    for (const auto& fit : fits.at("fits")) {
        const auto label = fit.at("treatment").get<std::string>();
        series.labels.push_back(label);
        series.estimates.push_back(fit.at("theta").is_null()
                                       ? std::numeric_limits<double>::quiet_NaN()
                                       : fit.at("theta").get<double>());
        const auto it = mb.find(label);
        series.mb_p.push_back(it != mb.end() ? it->second
                              : fit.at("p_value").is_null()
                                  ? std::numeric_limits<double>::quiet_NaN()
                                  : fit.at("p_value").get<double>());
    }
    return series;
}

} // namespace

int run_report(const RunConfig& config) {
    if (config.run_dirs.empty() || config.run_dirs.size() > 2)
        throw std::invalid_argument("report takes one or two run directories");
    if (config.out_dir.empty()) throw std::invalid_argument("no --out directory given");

    std::vector<RunSeries> series;
    for (const auto& dir : config.run_dirs) series.push_back(load_series(dir));

    if (series.size() == 2) {
        std::vector<std::string> unmatched;
        for (const auto& l : series[0].labels)
            if (std::find(series[1].labels.begin(), series[1].labels.end(), l) ==
                series[1].labels.end())
                unmatched.push_back(l + " (only in " + series[0].name + ")");
        for (const auto& l : series[1].labels)
            if (std::find(series[0].labels.begin(), series[0].labels.end(), l) ==
                series[0].labels.end())
                unmatched.push_back(l + " (only in " + series[1].name + ")");
        if (!unmatched.empty()) {
            std::string msg = "treatment labels do not match between runs:";
            for (const auto& u : unmatched) msg += "\n  " + u;
            throw std::runtime_error(msg);
        }
    }

    fs::create_directories(config.out_dir);
    const fs::path out(config.out_dir);

    std::vector<std::vector<std::string>> records;
    std::ostringstream text;
    if (series.size() == 1) {
        records.push_back({"label", "estimate", "mb_p"});
        text << "effect estimates (" << series[0].name << ")\n";
        for (size_t i = 0; i < series[0].labels.size(); ++i) {
            records.push_back({series[0].labels[i], fmt_full(series[0].estimates[i]),
                               fmt_full(series[0].mb_p[i])});
            text << "  " << series[0].labels[i] << ": " << fmt4(series[0].estimates[i])
                 << " (mb_p " << fmt3(series[0].mb_p[i]) << ")\n";
        }
    } else {
        records.push_back({"label", "estimate_a", "mb_p_a", "estimate_b", "mb_p_b"});
        text << "effect comparison: a=" << series[0].name << " b=" << series[1].name << "\n";
        for (size_t i = 0; i < series[0].labels.size(); ++i) {
            const auto& label = series[0].labels[i];
            const auto pos = static_cast<size_t>(
                std::find(series[1].labels.begin(), series[1].labels.end(), label) -
                series[1].labels.begin());
            records.push_back({label, fmt_full(series[0].estimates[i]),
                               fmt_full(series[0].mb_p[i]), fmt_full(series[1].estimates[pos]),
                               fmt_full(series[1].mb_p[pos])});
            text << "  " << label << ": " << fmt4(series[0].estimates[i]) << " vs "
                 << fmt4(series[1].estimates[pos]) << "\n";
        }
    }
    csv::write_records((out / "report.csv").string(), records);
    write_text(out / "report.txt", text.str());
    std::cout << text.str();
    return 0;
}

int dispatch(const RunConfig& config) {
    if (config.command == "ingest") return run_ingest(config);
    if (config.command == "summarize") return run_summarize(config);
    if (config.command == "estimate") return run_estimate(config);
    if (config.command == "simulate") return run_simulate(config);
    if (config.command == "report") return run_report(config);
    throw std::invalid_argument("unknown command: " + config.command);
}

} // namespace dmlplr::cli
