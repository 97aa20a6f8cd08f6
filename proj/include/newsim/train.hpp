#pragma once

#include "newsim/corpus.hpp"
#include "newsim/loss.hpp"
#include "newsim/model.hpp"
#include "newsim/optimizer.hpp"
#include "newsim/tokenize.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace newsim {

/// Everything a cross-validation run needs besides the data. Serialized as
/// the run config file.
struct RunConfig {
    ModelConfig model;
    LossConfig loss;
    OptimizerConfig optimizer;
    std::string policy = std::string{default_policy_name};
    int folds = 10;
    std::uint64_t seed = 0;

    /// Throws ConfigError.
    void validate() const;
};

nlohmann::json to_json(const RunConfig &c);
RunConfig run_config_from_json(const nlohmann::json &j);

// Sub-seeds derived from the global seed (see derive_seed).
struct SeedPlan {
    std::uint64_t split;
    std::uint64_t init;
    std::uint64_t dropout;
    std::uint64_t sampling;

    static SeedPlan from_global(std::uint64_t seed) noexcept;
};

struct EpochMetrics {
    int fold = 0;
    std::size_t epoch = 0; // 1-based
    double train_loss = 0.0;
    std::optional<double> val_pearson; // empty when undefined
};

nlohmann::json to_json(const EpochMetrics &m);
EpochMetrics epoch_metrics_from_json(const nlohmann::json &j);

struct FoldResult {
    int fold_index = 0;
    ModelParameters best_checkpoint;
    std::optional<double> best_val_pearson;
    std::size_t best_epoch = 0;
    std::vector<EpochMetrics> training_curve;
};

using EpochCallback = std::function<void(const EpochMetrics &)>;

/// Encodes every record as [CLS] title+text [SEP] title+text [SEP].
std::vector<EncodedPair> encode_records(const std::vector<ArticleRecord> &records, const Tokenizer &tokenizer,
                                        TruncationPolicy policy);

/// Seed mixing used for the dropout masks of one training forward.
std::uint64_t training_dropout_seed(std::uint64_t dropout_seed, std::size_t step, std::size_t sample,
                                    std::size_t forward) noexcept;

/// Trains on every fold except `fold_index` and selects the epoch with the
/// best validation Pearson of clipped Overall predictions (earlier epoch on
/// ties). `encoded` must be aligned with `records`.
/// Throws DataError for an empty split or a fold assignment that separates an
/// augmented record from its source, NumericError for a non-finite loss.
FoldResult train_fold(const std::vector<ArticleRecord> &records, const std::vector<EncodedPair> &encoded,
                      const FoldAssignment &folds, int fold_index, const ModelConfig &model_cfg,
                      const LossConfig &loss_cfg, const OptimizerConfig &opt_cfg, std::uint64_t seed,
                      const EpochCallback &on_epoch = {});

/// Runs train_fold for every fold; up to `jobs` folds train concurrently.
/// Results are ordered by fold regardless of completion order. With jobs > 1
/// `on_epoch` may be called from several threads at once.
std::vector<FoldResult> cross_validate(const std::vector<ArticleRecord> &records,
                                       const std::vector<EncodedPair> &encoded, const FoldAssignment &folds,
                                       const RunConfig &config, int jobs = 1, const EpochCallback &on_epoch = {});

/// Mean absolute Overall gap between two dropout forwards, averaged over
/// `pairs`.
double dropout_disagreement(const ModelParameters &params, const std::vector<EncodedPair> &pairs,
                            std::uint64_t seed);

/// Mean loss (eval mode) of `params` over the selected records.
double evaluate_loss(const ModelParameters &params, const std::vector<ArticleRecord> &records,
                     const std::vector<EncodedPair> &encoded, const std::vector<std::size_t> &indices,
                     const LossConfig &loss_cfg);

struct EnsembleModel {
    std::vector<ModelParameters> members;
};

EnsembleModel make_ensemble(std::vector<FoldResult> folds);

/// Mean of the members' eval-mode predictions, unclipped. Throws ConfigError
/// for an empty ensemble.
PredictionVector ensemble_predict(const EnsembleModel &ensemble, const EncodedPair &pair);

} // namespace newsim
