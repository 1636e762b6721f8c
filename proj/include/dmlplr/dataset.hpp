#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "dmlplr/csv.hpp"

namespace dmlplr {

// ---------------------------------------------------------------------------
// Raw firm-year tables
// ---------------------------------------------------------------------------

enum class ColumnKind { Numeric, Categorical, Identifier };

struct ColumnDecl {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
};

// Missing values: NaN for numeric cells, empty string for categorical and
// identifier cells. Imputation to zero happens in engineer_features, never
// here, so the sample filters see true missingness.
struct RawTable {
    std::vector<ColumnDecl> columns;
    std::vector<std::vector<double>> numeric;     // per column; empty for non-numeric
    std::vector<std::vector<std::string>> text;   // per column; empty for numeric
    size_t row_count = 0;

    int column_index(const std::string& name) const;
    bool has_column(const std::string& name) const { return column_index(name) >= 0; }
    const std::vector<double>& numeric_column(const std::string& name) const;
    const std::vector<std::string>& text_column(const std::string& name) const;
};

RawTable load_csv(const std::string& path, const std::vector<ColumnDecl>& schema,
                  char delimiter = ',');

// ---------------------------------------------------------------------------
// Sample filters
// ---------------------------------------------------------------------------

// Money thresholds follow the source-data units: sales/assets in millions
// USD, the interest-expense floor in thousands USD.
struct FilterRules {
    std::vector<std::string> excluded_sic_prefixes = {"6", "9"};
    double min_sales_musd = 1.0;
    double min_assets_musd = 1.0;
    bool require_nonneg_equity = true;
    bool require_nonneg_debt = true;
    std::optional<double> min_interest_expense_kusd;  // active only when set

    std::string sic_column = "sic";
    std::string sales_column = "sale";
    std::string assets_column = "at";
    std::string equity_column = "seq";
    std::string long_term_debt_column = "dltt";
    std::string short_term_debt_column = "dlc";
    std::string interest_expense_column = "xint";
};

// Row passes when every active rule passes. Minimum-size rules require the
// value to be present; the non-negativity rules only reject observed
// negatives (a missing component counts as zero in the total-debt sum, which
// matches the later impute-to-zero step). Order of surviving rows preserved.
RawTable apply_sample_filters(const RawTable& table, const FilterRules& rules);

// ---------------------------------------------------------------------------
// Outcome and ratio transforms
// ---------------------------------------------------------------------------

double compute_lda(double long_term_debt, double short_term_debt, double total_assets);
double compute_ldma(double long_term_debt, double short_term_debt, double total_assets,
                    double book_equity, double market_equity);
double compute_intcov(double ebitda, double interest_expense);

// ---------------------------------------------------------------------------
// Treatments
// ---------------------------------------------------------------------------

// Any:      one "rated" dummy.
// InvSpec:  investment grade (AAA..BBB-) vs speculative grade (BB+ and
//           below, including SD and D).
// Broad:    10 letter categories AAA..CC plus SD and D.
// Granular: 22 notch-level categories.
// "none" (or an empty cell) encodes as an all-zero row in every scheme.
enum class TreatmentGranularity { Any, InvSpec, Broad, Granular };

int treatment_column_count(TreatmentGranularity level);
const std::vector<std::string>& granular_rating_tokens();  // 22 tokens, scale order
const std::vector<std::string>& broad_rating_tokens();     // 10 tokens, scale order

struct TreatmentEncoding {
    Eigen::MatrixXd indicators;  // n x p, entries in {0,1}, row sums <= 1
    std::vector<std::string> labels;
};

TreatmentEncoding encode_treatments(const RawTable& table, TreatmentGranularity level,
                                    const std::string& rating_column = "rating");

// ---------------------------------------------------------------------------
// Engineered dataset
// ---------------------------------------------------------------------------

enum class OutcomeKind { LDA, LDMA };

struct FeatureConfig {
    OutcomeKind outcome = OutcomeKind::LDA;
    TreatmentGranularity granularity = TreatmentGranularity::Any;
    std::vector<std::string> scale_items;        // scaled by sales and by assets
    std::vector<std::string> categorical_columns;
    bool include_intcov = false;

    std::string rating_column = "rating";
    std::string sic_column = "sic";
    std::string sales_column = "sale";
    std::string assets_column = "at";
    std::string long_term_debt_column = "dltt";
    std::string short_term_debt_column = "dlc";
    std::string book_equity_column = "seq";
    std::string market_equity_column = "mkvalt";
    std::string ebitda_column = "ebitda";
    std::string interest_expense_column = "xint";
};

// Default configuration for the bundled firm-year schema (see data/README.md).
FeatureConfig default_feature_config();

struct Dataset {
    Eigen::VectorXd outcome;       // leverage ratio
    Eigen::MatrixXd treatments;    // n x p_t, mutually exclusive {0,1} dummies
    Eigen::MatrixXd covariates;    // n x p_x
    std::vector<std::string> treatment_names;
    std::vector<std::string> covariate_names;
    Eigen::Index n = 0;

    void validate() const;  // shapes, {0,1} treatments, finite values
};

// Builds the model-ready dataset from a filtered table: imputes missing
// financial items to zero, scales each item by sales and by assets, adds
// log(sales) and log(assets), dummy-codes categoricals with an explicit
// "missing" level, adds SIC dummies at the 1-, 2- and 3-digit level, and
// encodes the treatment dummies at the requested granularity.
Dataset engineer_features(const RawTable& table, const FeatureConfig& config);

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

struct SummaryRow {
    std::string group;
    double q1 = 0, median = 0, mean = 0, q3 = 0;
    size_t count = 0;
    double share = 0;
    bool has_stats = false;  // false for empty groups
};

// One row per treatment label (in dataset order), one for the untreated
// baseline ("none"), and a "total" row over all observations.
std::vector<SummaryRow> summarize(const Dataset& dataset);

} // namespace dmlplr
