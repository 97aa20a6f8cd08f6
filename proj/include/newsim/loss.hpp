#pragma once

#include "newsim/model.hpp"
#include "newsim/record.hpp"

#include <array>
#include <span>
#include <vector>

namespace newsim {

struct LossConfig {
    double overall_weight = 1.0; // w
    double rdrop_alpha = 0.0;    // alpha
    int forwards = 1;            // F

    /// Throws ConfigError.
    void validate() const;

    /// A single forward pass has nothing to compare, so alpha drops to 0.
    double effective_alpha() const noexcept { return forwards > 1 ? rdrop_alpha : 0.0; }

    bool operator==(const LossConfig &) const = default;
};

using DimensionVector = std::array<double, output_dim>;

/// w on Overall and (1 - w) / 6 on each other dimension.
DimensionVector dimension_weights(double overall_weight) noexcept;

struct MultiLabelLoss {
    double loss = 0.0;
    DimensionVector squared_errors{};
};

MultiLabelLoss multi_label_loss(const PredictionVector &pred, const ScoreVector &label, double overall_weight);

struct LossBreakdown {
    double l_r = 0.0;   // mean weighted disagreement over all pairs of forwards
    double l_b = 0.0;   // mean multi-label loss over forwards
    double total = 0.0; // alpha * l_r + (1 - alpha) * l_b
    DimensionVector per_dimension_l_b{}; // unweighted squared errors, averaged over forwards
};

/// Throws ConfigError when preds.size() != cfg.forwards.
LossBreakdown rdrop_loss(std::span<const PredictionVector> preds, const ScoreVector &label, const LossConfig &cfg);

/// d(total)/d(preds[k]) for each forward k.
std::vector<DimensionVector> rdrop_loss_gradient(std::span<const PredictionVector> preds, const ScoreVector &label,
                                                 const LossConfig &cfg);

} // namespace newsim
