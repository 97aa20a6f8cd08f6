#include "newsim/eval.hpp"

#include "newsim/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>

namespace newsim {

std::string_view to_string(PearsonError e) noexcept
{
    switch (e) {
    case PearsonError::length_mismatch: return "length mismatch";
    case PearsonError::too_few_samples: return "fewer than two samples";
    case PearsonError::zero_variance: return "zero variance";
    }
    return "undefined";
}

double PearsonResult::value() const
{
    if (!value_)
        throw std::logic_error{"pearson undefined: " + std::string{to_string(error_)}};
    return *value_;
}

PearsonResult pearson(std::span<const double> xs, std::span<const double> ys)
{
    if (xs.size() != ys.size())
        return PearsonResult::failure(PearsonError::length_mismatch);
    const std::size_t n = xs.size();
    if (n < 2)
        return PearsonResult::failure(PearsonError::too_few_samples);

    long double sum_x = 0.0L;
    long double sum_y = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        sum_x += xs[i];
        sum_y += ys[i];
    }
    const long double mean_x = sum_x / static_cast<long double>(n);
    const long double mean_y = sum_y / static_cast<long double>(n);

    long double sxx = 0.0L;
    long double syy = 0.0L;
    long double sxy = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        const long double dx = xs[i] - mean_x;
        const long double dy = ys[i] - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0L || syy == 0.0L)
        return PearsonResult::failure(PearsonError::zero_variance);
    const long double r = sxy / std::sqrt(sxx * syy);
    return PearsonResult::success(static_cast<double>(std::clamp(r, -1.0L, 1.0L)));
}

double clip_score(double x, double lo, double hi) noexcept
{
    return std::max(lo, std::min(hi, x));
}

std::vector<double> clip_scores(std::span<const double> preds, double lo, double hi)
{
    if (!(lo < hi))
        throw ConfigError{"clip bounds must satisfy lo < hi"};
    std::vector<double> out(preds.size());
    std::transform(preds.begin(), preds.end(), out.begin(), [&](double x) { return clip_score(x, lo, hi); });
    return out;
}

EvalReport per_pair_report(const std::vector<ArticleRecord> &records,
                           const std::vector<std::pair<std::string, double>> &predictions)
{
    std::map<std::string, double, std::less<>> by_id;
    std::vector<std::string> extra;
    for (const auto &[id, value] : predictions)
        if (!by_id.emplace(id, value).second)
            extra.push_back(id + " (duplicate)");

    std::vector<std::string> missing;
    std::set<std::string, std::less<>> seen;
    for (const auto &r : records) {
        if (!by_id.contains(r.pair_id))
            missing.push_back(r.pair_id);
        seen.insert(r.pair_id);
    }
    for (const auto &[id, value] : by_id)
        if (!seen.contains(id))
            extra.push_back(id);
    if (!missing.empty() || !extra.empty()) {
        std::string msg = "predictions do not cover the dataset exactly;";
        if (!missing.empty()) {
            msg += " missing:";
            for (const auto &id : missing)
                msg += " " + id;
        }
        if (!extra.empty()) {
            msg += " extra:";
            for (const auto &id : extra)
                msg += " " + id;
        }
        throw DataError{msg};
    }

    EvalReport report;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    std::vector<double> all_pred;
    std::vector<double> all_gold;
    for (const auto &r : records) {
        const double pred = by_id.find(r.pair_id)->second;
        const double gold = r.scores.overall();
        report.predictions.push_back({r.pair_id, pred, gold});
        auto &g = groups[to_group_tag(r.langs())];
        g.first.push_back(pred);
        g.second.push_back(gold);
        all_pred.push_back(pred);
        all_gold.push_back(gold);
    }
    for (const auto &[tag, series] : groups)
        report.per_pair.push_back({tag, series.first.size(), pearson(series.first, series.second).as_optional()});
    report.overall_pearson = pearson(all_pred, all_gold).as_optional();
    return report;
}

std::string format_percent(double r)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", r * 100.0);
    return buf;
}

void write_predictions_csv(std::ostream &out, const std::vector<std::pair<std::string, double>> &predictions)
{
    out << "pair_id,Overall\n";
    char buf[32];
    for (const auto &[id, value] : predictions) {
        std::snprintf(buf, sizeof buf, "%.6f", value);
        out << id << ',' << buf << '\n';
    }
}

void write_report_csv(std::ostream &out, const EvalReport &report)
{
    const auto cell = [](const std::optional<double> &r) { return r ? format_percent(*r) : std::string{"undefined"}; };
    out << "group,count,pearson\n";
    for (const auto &g : report.per_pair)
        out << g.group << ',' << g.count << ',' << cell(g.pearson) << '\n';
    out << "overall," << report.predictions.size() << ',' << cell(report.overall_pearson) << '\n';
}

nlohmann::json report_summary_json(const EvalReport &report)
{
    const auto value = [](const std::optional<double> &r) -> nlohmann::json {
        if (!r)
            return nullptr;
        return std::round(*r * 10000.0) / 100.0;
    };
    nlohmann::json groups = nlohmann::json::array();
    for (const auto &g : report.per_pair)
        groups.push_back({{"group", g.group}, {"count", g.count}, {"pearson", value(g.pearson)}});
    return {{"count", report.predictions.size()}, {"overall_pearson", value(report.overall_pearson)},
            {"groups", std::move(groups)}};
}

} // namespace newsim
