#include "newsim/loss.hpp"

#include "newsim/error.hpp"

#include <string>

namespace newsim {

void LossConfig::validate() const
{
    if (!(overall_weight >= 0.0 && overall_weight <= 1.0))
        throw ConfigError{"overall_weight must lie in [0, 1]"};
    if (!(rdrop_alpha >= 0.0 && rdrop_alpha <= 1.0))
        throw ConfigError{"rdrop_alpha must lie in [0, 1]"};
    if (forwards < 1 || forwards > 3)
        throw ConfigError{"forwards must be 1, 2 or 3"};
}

DimensionVector dimension_weights(double overall_weight) noexcept
{
    DimensionVector weights;
    weights.fill((1.0 - overall_weight) / 6.0);
    weights[ScoreVector::overall_index] = overall_weight;
    return weights;
}

MultiLabelLoss multi_label_loss(const PredictionVector &pred, const ScoreVector &label, double overall_weight)
{
    const auto weights = dimension_weights(overall_weight);
    MultiLabelLoss out;
    for (std::size_t j = 0; j < output_dim; ++j) {
        const double e = pred[j] - label[j];
        out.squared_errors[j] = e * e;
        out.loss += weights[j] * out.squared_errors[j];
    }
    return out;
}

namespace {

void check_arity(std::span<const PredictionVector> preds, const LossConfig &cfg)
{
    if (preds.size() != static_cast<std::size_t>(cfg.forwards))
        throw ConfigError{"expected " + std::to_string(cfg.forwards) + " forward passes, got " +
                          std::to_string(preds.size())};
}

} // namespace

LossBreakdown rdrop_loss(std::span<const PredictionVector> preds, const ScoreVector &label, const LossConfig &cfg)
{
    check_arity(preds, cfg);
    const double f = static_cast<double>(preds.size());
    const auto weights = dimension_weights(cfg.overall_weight);

    LossBreakdown out;
    for (const auto &p : preds) {
        const auto ml = multi_label_loss(p, label, cfg.overall_weight);
        out.l_b += ml.loss;
        for (std::size_t j = 0; j < output_dim; ++j)
            out.per_dimension_l_b[j] += ml.squared_errors[j];
    }
    out.l_b /= f;
    for (auto &v : out.per_dimension_l_b)
        v /= f;

    std::size_t pairs = 0;
    for (std::size_t a = 0; a < preds.size(); ++a)
        for (std::size_t b = a + 1; b < preds.size(); ++b) {
            for (std::size_t j = 0; j < output_dim; ++j) {
                const double diff = preds[a][j] - preds[b][j];
                out.l_r += weights[j] * diff * diff;
            }
            ++pairs;
        }
    if (pairs > 0)
        out.l_r /= static_cast<double>(pairs);

    const double alpha = cfg.effective_alpha();
    out.total = alpha * out.l_r + (1.0 - alpha) * out.l_b;
    return out;
}

std::vector<DimensionVector> rdrop_loss_gradient(std::span<const PredictionVector> preds, const ScoreVector &label,
                                                 const LossConfig &cfg)
{
    check_arity(preds, cfg);
    const std::size_t n = preds.size();
    const double f = static_cast<double>(n);
    const double pairs = f * (f - 1.0) / 2.0;
    const double alpha = cfg.effective_alpha();
    const auto weights = dimension_weights(cfg.overall_weight);

    std::vector<DimensionVector> grads(n);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < output_dim; ++j) {
            double g = (1.0 - alpha) * 2.0 * weights[j] * (preds[k][j] - label[j]) / f;
            if (alpha != 0.0 && n > 1) {
                double disagreement = 0.0;
                for (std::size_t b = 0; b < n; ++b)
                    if (b != k)
                        disagreement += preds[k][j] - preds[b][j];
                g += alpha * 2.0 * weights[j] * disagreement / pairs;
            }
            grads[k][j] = g;
        }
    return grads;
}

} // namespace newsim
