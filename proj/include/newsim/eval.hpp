#pragma once

#include "newsim/record.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace newsim {

enum class PearsonError { length_mismatch, too_few_samples, zero_variance };

std::string_view to_string(PearsonError e) noexcept;

// Either a coefficient in [-1, 1] or the reason it is undefined.
class PearsonResult {
public:
    static PearsonResult success(double r) { return PearsonResult{r, {}}; }
    static PearsonResult failure(PearsonError e) { return PearsonResult{std::nullopt, e}; }

    bool ok() const noexcept { return value_.has_value(); }
    explicit operator bool() const noexcept { return ok(); }
    double value() const; // throws std::logic_error when !ok()
    PearsonError error() const noexcept { return error_; }
    std::optional<double> as_optional() const noexcept { return value_; }

private:
    PearsonResult(std::optional<double> v, PearsonError e) : value_{v}, error_{e} {}
    std::optional<double> value_;
    PearsonError error_;
};

/// Two-pass sample Pearson correlation accumulated in long double.
PearsonResult pearson(std::span<const double> xs, std::span<const double> ys);

double clip_score(double x, double lo = ScoreVector::min_score, double hi = ScoreVector::max_score) noexcept;

std::vector<double> clip_scores(std::span<const double> preds, double lo = ScoreVector::min_score,
                                double hi = ScoreVector::max_score);

struct GroupResult {
    std::string group;
    std::size_t count = 0;
    std::optional<double> pearson; // empty when undefined
};

struct PredictionRow {
    std::string pair_id;
    double predicted_overall = 0.0;
    double gold_overall = 0.0;
};

struct EvalReport {
    std::optional<double> overall_pearson;
    std::vector<GroupResult> per_pair; // sorted by group tag
    std::vector<PredictionRow> predictions;
};

/// Groups by language-pair tag ("xx" or "xx-yy"). `predictions` holds
/// (pair_id, predicted Overall) and must cover `records` exactly; otherwise
/// DataError lists the missing and extra ids.
EvalReport per_pair_report(const std::vector<ArticleRecord> &records,
                           const std::vector<std::pair<std::string, double>> &predictions);

/// "pair_id,Overall" followed by one row per prediction.
void write_predictions_csv(std::ostream &out, const std::vector<std::pair<std::string, double>> &predictions);

/// "group,count,pearson" rows plus a final "overall" row; Pearson x100 to two
/// decimals, "undefined" where it is not defined.
void write_report_csv(std::ostream &out, const EvalReport &report);

nlohmann::json report_summary_json(const EvalReport &report);

/// x100 with two decimals, e.g. 0.85384 -> "85.38".
std::string format_percent(double r);

} // namespace newsim
