#include "dmlplr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "dmlplr/stats.hpp"

namespace dmlplr {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

bool is_missing(double v) { return std::isnan(v); }
double zero_if_missing(double v) { return std::isnan(v) ? 0.0 : v; }

double parse_numeric_cell(const std::string& cell) {
    if (cell.empty()) return kMissing;
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) return kMissing;
    while (*end == ' ' || *end == '\t') ++end;
    if (*end != '\0') return kMissing;
    return v;
}

} // namespace

// ---------------------------------------------------------------------------
// RawTable
// ---------------------------------------------------------------------------

int RawTable::column_index(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i)
        if (columns[i].name == name) return static_cast<int>(i);
    return -1;
}

const std::vector<double>& RawTable::numeric_column(const std::string& name) const {
    const int idx = column_index(name);
    if (idx < 0) throw std::runtime_error("missing required column: " + name);
    if (columns[idx].kind != ColumnKind::Numeric)
        throw std::runtime_error("column is not numeric: " + name);
    return numeric[static_cast<size_t>(idx)];
}

const std::vector<std::string>& RawTable::text_column(const std::string& name) const {
    const int idx = column_index(name);
    if (idx < 0) throw std::runtime_error("missing required column: " + name);
    if (columns[idx].kind == ColumnKind::Numeric)
        throw std::runtime_error("column is numeric, expected text: " + name);
    return text[static_cast<size_t>(idx)];
}

RawTable load_csv(const std::string& path, const std::vector<ColumnDecl>& schema,
                  char delimiter) {
    {
        std::set<std::string> seen;
        for (const auto& c : schema)
            if (!seen.insert(c.name).second)
                throw std::runtime_error("duplicate column in schema: " + c.name);
    }

    csv::ParseOptions opt;
    opt.delimiter = delimiter;
    const auto records = csv::read_records(path, opt);
    if (records.empty()) throw std::runtime_error("empty file (no header): " + path);

    const auto& header = records[0];
    if (header.size() != schema.size())
        throw std::runtime_error("header has " + std::to_string(header.size()) +
                                 " columns, schema declares " + std::to_string(schema.size()));
    for (size_t i = 0; i < schema.size(); ++i)
        if (header[i] != schema[i].name)
            throw std::runtime_error("header mismatch at column " + std::to_string(i + 1) +
                                     ": expected '" + schema[i].name + "', found '" +
                                     header[i] + "'");

    RawTable table;
    table.columns = schema;
    table.numeric.resize(schema.size());
    table.text.resize(schema.size());
    table.row_count = records.size() - 1;
    for (size_t c = 0; c < schema.size(); ++c) {
        if (schema[c].kind == ColumnKind::Numeric)
            table.numeric[c].reserve(table.row_count);
        else
            table.text[c].reserve(table.row_count);
    }

    for (size_t r = 1; r < records.size(); ++r) {
        const auto& row = records[r];
        if (row.size() != schema.size())
            throw std::runtime_error("row " + std::to_string(r + 1) + " has " +
                                     std::to_string(row.size()) + " fields, expected " +
                                     std::to_string(schema.size()));
        for (size_t c = 0; c < schema.size(); ++c) {
            if (schema[c].kind == ColumnKind::Numeric)
                table.numeric[c].push_back(parse_numeric_cell(row[c]));
            else
                table.text[c].push_back(row[c]);
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// Filters
// ---------------------------------------------------------------------------

RawTable apply_sample_filters(const RawTable& table, const FilterRules& rules) {
    if (rules.min_sales_musd < 0 || rules.min_assets_musd < 0 ||
        (rules.min_interest_expense_kusd && *rules.min_interest_expense_kusd < 0))
        throw std::invalid_argument("filter thresholds must be non-negative");

    const auto& sic = table.text_column(rules.sic_column);
    const auto& sale = table.numeric_column(rules.sales_column);
    const auto& at = table.numeric_column(rules.assets_column);
    const auto& seq = table.numeric_column(rules.equity_column);
    const auto& dltt = table.numeric_column(rules.long_term_debt_column);
    const auto& dlc = table.numeric_column(rules.short_term_debt_column);
    const std::vector<double>* xint = nullptr;
    if (rules.min_interest_expense_kusd)
        xint = &table.numeric_column(rules.interest_expense_column);

    std::vector<size_t> keep;
    keep.reserve(table.row_count);
    for (size_t r = 0; r < table.row_count; ++r) {
        bool pass = true;
        if (!sic[r].empty()) {
            for (const auto& prefix : rules.excluded_sic_prefixes)
                if (sic[r].rfind(prefix, 0) == 0) { pass = false; break; }
        }
        if (pass && (is_missing(sale[r]) || sale[r] < rules.min_sales_musd)) pass = false;
        if (pass && (is_missing(at[r]) || at[r] < rules.min_assets_musd)) pass = false;
        if (pass && rules.require_nonneg_equity && !is_missing(seq[r]) && seq[r] < 0) pass = false;
        if (pass && rules.require_nonneg_debt &&
            zero_if_missing(dltt[r]) + zero_if_missing(dlc[r]) < 0) pass = false;
        if (pass && xint &&
            (is_missing((*xint)[r]) || (*xint)[r] * 1000.0 < *rules.min_interest_expense_kusd))
            pass = false;
        if (pass) keep.push_back(r);
    }

    RawTable out;
    out.columns = table.columns;
    out.numeric.resize(table.columns.size());
    out.text.resize(table.columns.size());
    out.row_count = keep.size();
    for (size_t c = 0; c < table.columns.size(); ++c) {
        if (table.columns[c].kind == ColumnKind::Numeric) {
            out.numeric[c].reserve(keep.size());
            for (size_t r : keep) out.numeric[c].push_back(table.numeric[c][r]);
        } else {
            out.text[c].reserve(keep.size());
            for (size_t r : keep) out.text[c].push_back(table.text[c][r]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ratios
// ---------------------------------------------------------------------------

double compute_lda(double long_term_debt, double short_term_debt, double total_assets) {
    if (!(total_assets > 0))
        throw std::domain_error("total assets must be positive for the leverage ratio");
    return (long_term_debt + short_term_debt) / total_assets;
}

double compute_ldma(double long_term_debt, double short_term_debt, double total_assets,
                    double book_equity, double market_equity) {
    const double denom = total_assets - book_equity + market_equity;
    if (!(denom > 0))
        throw std::domain_error("quasi-market denominator must be positive");
    return (long_term_debt + short_term_debt) / denom;
}

double compute_intcov(double ebitda, double interest_expense) {
    if (!(interest_expense > 0))
        throw std::domain_error("interest expense must be positive for interest coverage");
    return ebitda / interest_expense;
}

// ---------------------------------------------------------------------------
// Treatments
// ---------------------------------------------------------------------------

const std::vector<std::string>& granular_rating_tokens() {
    static const std::vector<std::string> tokens = {
        "AAA", "AA+", "AA", "AA-", "A+", "A", "A-", "BBB+", "BBB", "BBB-",
        "BB+", "BB", "BB-", "B+", "B", "B-", "CCC+", "CCC", "CCC-", "CC",
        "SD", "D"};
    return tokens;
}

const std::vector<std::string>& broad_rating_tokens() {
    static const std::vector<std::string> tokens = {
        "AAA", "AA", "A", "BBB", "BB", "B", "CCC", "CC", "SD", "D"};
    return tokens;
}

int treatment_column_count(TreatmentGranularity level) {
    switch (level) {
        case TreatmentGranularity::Any: return 1;
        case TreatmentGranularity::InvSpec: return 2;
        case TreatmentGranularity::Broad: return 10;
        case TreatmentGranularity::Granular: return 22;
    }
    return 0;
}

namespace {

// Index in the 22-token granular scale, or -1 for "none".
int granular_index(const std::string& token) {
    if (token.empty() || token == "none") return -1;
    const auto& tokens = granular_rating_tokens();
    for (size_t i = 0; i < tokens.size(); ++i)
        if (tokens[i] == token) return static_cast<int>(i);
    throw std::runtime_error("unknown rating token: '" + token + "'");
}

std::string broad_of(const std::string& granular) {
    std::string b = granular;
    if (!b.empty() && (b.back() == '+' || b.back() == '-')) b.pop_back();
    return b;
}

} // namespace

TreatmentEncoding encode_treatments(const RawTable& table, TreatmentGranularity level,
                                    const std::string& rating_column) {
    const auto& rating = table.text_column(rating_column);
    const int p = treatment_column_count(level);
    TreatmentEncoding enc;
    enc.indicators = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(table.row_count), p);

    switch (level) {
        case TreatmentGranularity::Any:
            enc.labels = {"rated"};
            break;
        case TreatmentGranularity::InvSpec:
            enc.labels = {"investment_grade", "speculative_grade"};
            break;
        case TreatmentGranularity::Broad:
            enc.labels = broad_rating_tokens();
            break;
        case TreatmentGranularity::Granular:
            enc.labels = granular_rating_tokens();
            break;
    }

    // BBB- is the last investment-grade token in scale order.
    const int last_investment = 9;
    for (size_t r = 0; r < table.row_count; ++r) {
        const int g = granular_index(rating[r]);
        if (g < 0) continue;  // no rating: all-zero row
        int col = 0;
        switch (level) {
            case TreatmentGranularity::Any:
                col = 0;
                break;
            case TreatmentGranularity::InvSpec:
                col = (g <= last_investment) ? 0 : 1;
                break;
            case TreatmentGranularity::Broad: {
                const std::string b = broad_of(granular_rating_tokens()[g]);
                col = static_cast<int>(std::find(broad_rating_tokens().begin(),
                                                 broad_rating_tokens().end(), b) -
                                       broad_rating_tokens().begin());
                break;
            }
            case TreatmentGranularity::Granular:
                col = g;
                break;
        }
        enc.indicators(static_cast<Eigen::Index>(r), col) = 1.0;
    }
    return enc;
}

// ---------------------------------------------------------------------------
// Feature engineering
// ---------------------------------------------------------------------------

FeatureConfig default_feature_config() {
    FeatureConfig config;
    config.scale_items = {"ppent", "che", "rect", "invt", "act", "intan", "capx",
                          "oancf", "ni",  "re",   "cogs", "xsga", "dp",   "emp"};
    config.categorical_columns = {"au", "ceoso"};
    return config;
}

namespace {

// Dummy columns for one categorical source: one column per observed level
// (sorted) plus an explicit "missing" level, so each row activates exactly
// one dummy.
void append_categorical_dummies(const std::string& base_name,
                                const std::vector<std::string>& values,
                                std::vector<std::pair<std::string, std::vector<double>>>& out) {
    std::set<std::string> levels;
    for (const auto& v : values)
        if (!v.empty()) levels.insert(v);

    const size_t n = values.size();
    for (const auto& level : levels) {
        std::vector<double> col(n, 0.0);
        for (size_t r = 0; r < n; ++r)
            if (values[r] == level) col[r] = 1.0;
        out.emplace_back(base_name + "_" + level, std::move(col));
    }
    std::vector<double> missing(n, 0.0);
    for (size_t r = 0; r < n; ++r)
        if (values[r].empty()) missing[r] = 1.0;
    out.emplace_back(base_name + "_missing", std::move(missing));
}

std::vector<std::string> sic_prefixes(const std::vector<std::string>& sic, size_t digits) {
    std::vector<std::string> out(sic.size());
    for (size_t r = 0; r < sic.size(); ++r)
        out[r] = sic[r].size() >= digits ? sic[r].substr(0, digits) : std::string();
    return out;
}

} // namespace

Dataset engineer_features(const RawTable& table, const FeatureConfig& config) {
    const size_t n = table.row_count;
    const auto& sale = table.numeric_column(config.sales_column);
    const auto& at = table.numeric_column(config.assets_column);
    const auto& dltt = table.numeric_column(config.long_term_debt_column);
    const auto& dlc = table.numeric_column(config.short_term_debt_column);

    for (size_t r = 0; r < n; ++r) {
        if (is_missing(sale[r]) || sale[r] <= 0)
            throw std::domain_error("non-positive sales on surviving row " + std::to_string(r + 1) +
                                    "; apply the sample filters first");
        if (is_missing(at[r]) || at[r] <= 0)
            throw std::domain_error("non-positive assets on surviving row " + std::to_string(r + 1) +
                                    "; apply the sample filters first");
    }

    std::vector<std::pair<std::string, std::vector<double>>> cols;

    // (a) each financial item scaled by sales and by assets
    for (const auto& item : config.scale_items) {
        const auto& values = table.numeric_column(item);
        std::vector<double> by_sale(n), by_at(n);
        for (size_t r = 0; r < n; ++r) {
            const double v = zero_if_missing(values[r]);
            by_sale[r] = v / sale[r];
            by_at[r] = v / at[r];
        }
        cols.emplace_back(item + "_by_sale", std::move(by_sale));
        cols.emplace_back(item + "_by_at", std::move(by_at));
    }

    // (b) log size measures
    {
        std::vector<double> log_sale(n), log_at(n);
        for (size_t r = 0; r < n; ++r) {
            log_sale[r] = std::log(sale[r]);
            log_at[r] = std::log(at[r]);
        }
        cols.emplace_back("log_" + config.sales_column, std::move(log_sale));
        cols.emplace_back("log_" + config.assets_column, std::move(log_at));
    }

    // optional interest coverage covariate
    if (config.include_intcov) {
        const auto& ebitda = table.numeric_column(config.ebitda_column);
        const auto& xint = table.numeric_column(config.interest_expense_column);
        std::vector<double> intcov(n);
        for (size_t r = 0; r < n; ++r) {
            if (is_missing(xint[r]) || xint[r] <= 0)
                throw std::domain_error(
                    "row " + std::to_string(r + 1) +
                    " has no positive interest expense; enable the interest-expense filter");
            intcov[r] = compute_intcov(zero_if_missing(ebitda[r]), xint[r]);
        }
        cols.emplace_back("intcov", std::move(intcov));
    }

    // (c) dummy-coded categoricals, SIC at three digit levels
    for (const auto& cat : config.categorical_columns)
        append_categorical_dummies(cat, table.text_column(cat), cols);
    const auto& sic = table.text_column(config.sic_column);
    append_categorical_dummies("sic1", sic_prefixes(sic, 1), cols);
    append_categorical_dummies("sic2", sic_prefixes(sic, 2), cols);
    append_categorical_dummies("sic3", sic_prefixes(sic, 3), cols);

    Dataset ds;
    ds.n = static_cast<Eigen::Index>(n);
    ds.covariates.resize(ds.n, static_cast<Eigen::Index>(cols.size()));
    ds.covariate_names.reserve(cols.size());
    for (size_t c = 0; c < cols.size(); ++c) {
        ds.covariate_names.push_back(cols[c].first);
        for (size_t r = 0; r < n; ++r)
            ds.covariates(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                cols[c].second[r];
    }

    ds.outcome.resize(ds.n);
    if (config.outcome == OutcomeKind::LDA) {
        for (size_t r = 0; r < n; ++r)
            ds.outcome[static_cast<Eigen::Index>(r)] =
                compute_lda(zero_if_missing(dltt[r]), zero_if_missing(dlc[r]), at[r]);
    } else {
        const auto& seq = table.numeric_column(config.book_equity_column);
        const auto& mkvalt = table.numeric_column(config.market_equity_column);
        for (size_t r = 0; r < n; ++r)
            ds.outcome[static_cast<Eigen::Index>(r)] =
                compute_ldma(zero_if_missing(dltt[r]), zero_if_missing(dlc[r]), at[r],
                             zero_if_missing(seq[r]), zero_if_missing(mkvalt[r]));
    }

    auto enc = encode_treatments(table, config.granularity, config.rating_column);
    ds.treatments = std::move(enc.indicators);
    ds.treatment_names = std::move(enc.labels);

    ds.validate();
    return ds;
}

void Dataset::validate() const {
    if (outcome.size() != n || treatments.rows() != n || covariates.rows() != n)
        throw std::runtime_error("dataset blocks disagree on the observation count");
    if (!outcome.allFinite() || !treatments.allFinite() || !covariates.allFinite())
        throw std::runtime_error("dataset contains non-finite values");
    if (static_cast<size_t>(treatments.cols()) != treatment_names.size() ||
        static_cast<size_t>(covariates.cols()) != covariate_names.size())
        throw std::runtime_error("dataset column names out of sync");
    for (Eigen::Index i = 0; i < n; ++i) {
        double row_sum = 0;
        for (Eigen::Index j = 0; j < treatments.cols(); ++j) {
            const double v = treatments(i, j);
            if (v != 0.0 && v != 1.0)
                throw std::runtime_error("treatment indicators must be 0 or 1");
            row_sum += v;
        }
        if (row_sum > 1.0)
            throw std::runtime_error("treatment dummies must be mutually exclusive");
    }
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

namespace {

SummaryRow summary_of(const std::string& group, const std::vector<double>& values,
                      size_t total) {
    SummaryRow row;
    row.group = group;
    row.count = values.size();
    row.share = total > 0 ? static_cast<double>(values.size()) / static_cast<double>(total) : 0.0;
    if (values.empty()) return row;
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    row.q1 = quantile_type7_sorted(sorted, 0.25);
    row.median = quantile_type7_sorted(sorted, 0.50);
    row.q3 = quantile_type7_sorted(sorted, 0.75);
    row.mean = mean_of(values);
    row.has_stats = true;
    return row;
}

} // namespace

std::vector<SummaryRow> summarize(const Dataset& dataset) {
    const size_t total = static_cast<size_t>(dataset.n);
    std::vector<SummaryRow> rows;
    std::vector<double> none_values, all_values;
    all_values.reserve(total);

    for (Eigen::Index j = 0; j < dataset.treatments.cols(); ++j) {
        std::vector<double> values;
        for (Eigen::Index i = 0; i < dataset.n; ++i)
            if (dataset.treatments(i, j) == 1.0) values.push_back(dataset.outcome[i]);
        rows.push_back(summary_of(dataset.treatment_names[static_cast<size_t>(j)], values, total));
    }
    for (Eigen::Index i = 0; i < dataset.n; ++i) {
        all_values.push_back(dataset.outcome[i]);
        if (dataset.treatments.row(i).sum() == 0.0) none_values.push_back(dataset.outcome[i]);
    }
    rows.push_back(summary_of("none", none_values, total));
    rows.push_back(summary_of("total", all_values, total));
    return rows;
}

} // namespace dmlplr
