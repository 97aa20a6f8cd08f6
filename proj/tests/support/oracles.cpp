#include "oracles.hpp"

#include <cmath>

namespace newsim::testing {

double naive_pearson(const std::vector<double> &x, const std::vector<double> &y)
{
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

namespace {

double weighted_square(const PredictionVector &a, const std::array<double, 7> &b, double w)
{
    double overall = 0, rest = 0;
    for (int j = 0; j < 7; ++j) {
        const double e = (a.values[j] - b[j]) * (a.values[j] - b[j]);
        if (j == 4)
            overall += e;
        else
            rest += e;
    }
    return w * overall + (1 - w) / 6 * rest;
}

} // namespace

DirectLoss direct_rdrop(const std::vector<PredictionVector> &preds, const ScoreVector &label, double w,
                        double alpha)
{
    const int F = static_cast<int>(preds.size());
    double l_b = 0;
    for (const auto &p : preds)
        l_b += weighted_square(p, label.values, w);
    l_b /= F;

    double l_r = 0;
    int pairs = 0;
    for (int j = 0; j < F; ++j)
        for (int k = j + 1; k < F; ++k) {
            l_r += weighted_square(preds[j], preds[k].values, w);
            ++pairs;
        }
    if (pairs == 0)
        return {0.0, l_b, l_b};
    l_r /= pairs;
    return {l_r, l_b, alpha * l_r + (1 - alpha) * l_b};
}

} // namespace newsim::testing
