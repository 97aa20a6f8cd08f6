#include "newsim/train.hpp"

#include "newsim/error.hpp"
#include "newsim/eval.hpp"
#include "newsim/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace newsim {

void RunConfig::validate() const
{
    model.validate();
    loss.validate();
    optimizer.validate();
    policy_from_name(policy);
    if (folds < 2)
        throw ConfigError{"folds must be at least 2"};
}

nlohmann::json to_json(const RunConfig &c)
{
    return {
        {"model", to_json(c.model)},
        {"loss",
         {{"overall_weight", c.loss.overall_weight},
          {"rdrop_alpha", c.loss.rdrop_alpha},
          {"forwards", c.loss.forwards}}},
        {"optimizer", to_json(c.optimizer)},
        {"policy", c.policy},
        {"folds", c.folds},
        {"seed", c.seed},
    };
}

RunConfig run_config_from_json(const nlohmann::json &j)
{
    RunConfig c;
    try {
        if (!j.is_object())
            throw ConfigError{"run config must be a JSON object"};
        if (j.contains("model"))
            c.model = model_config_from_json(j.at("model"));
        if (j.contains("loss")) {
            const auto &l = j.at("loss");
            c.loss.overall_weight = l.value("overall_weight", c.loss.overall_weight);
            c.loss.rdrop_alpha = l.value("rdrop_alpha", c.loss.rdrop_alpha);
            c.loss.forwards = l.value("forwards", c.loss.forwards);
        }
        if (j.contains("optimizer"))
            c.optimizer = optimizer_config_from_json(j.at("optimizer"));
        c.policy = j.value("policy", c.policy);
        c.folds = j.value("folds", c.folds);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError{std::string{"invalid run config: "} + e.what()};
    }
    c.validate();
    return c;
}

SeedPlan SeedPlan::from_global(std::uint64_t seed) noexcept
{
    return {derive_seed(seed, "split"), derive_seed(seed, "init"), derive_seed(seed, "dropout"),
            derive_seed(seed, "sampling")};
}

nlohmann::json to_json(const EpochMetrics &m)
{
    return {{"fold", m.fold},
            {"epoch", m.epoch},
            {"train_loss", m.train_loss},
            {"val_pearson", m.val_pearson ? nlohmann::json(*m.val_pearson) : nlohmann::json(nullptr)}};
}

EpochMetrics epoch_metrics_from_json(const nlohmann::json &j)
{
    try {
        EpochMetrics m;
        m.fold = j.at("fold").get<int>();
        m.epoch = j.at("epoch").get<std::size_t>();
        m.train_loss = j.at("train_loss").get<double>();
        if (const auto &v = j.at("val_pearson"); !v.is_null())
            m.val_pearson = v.get<double>();
        return m;
    } catch (const nlohmann::json::exception &e) {
        throw DataError{std::string{"malformed metrics record: "} + e.what()};
    }
}

std::vector<EncodedPair> encode_records(const std::vector<ArticleRecord> &records, const Tokenizer &tokenizer,
                                        TruncationPolicy policy)
{
    std::vector<EncodedPair> out;
    out.reserve(records.size());
    for (const auto &r : records)
        out.push_back(encode_pair(tokenizer, compose_document(r.title1, r.text1),
                                  compose_document(r.title2, r.text2), policy));
    return out;
}

std::uint64_t training_dropout_seed(std::uint64_t dropout_seed, std::size_t step, std::size_t sample,
                                    std::size_t forward) noexcept
{
    return hash_combine(hash_combine(hash_combine(dropout_seed, step), sample), forward);
}

namespace {

std::optional<double> validation_pearson(const ModelParameters &params, const std::vector<ArticleRecord> &records,
                                         const std::vector<EncodedPair> &encoded,
                                         const std::vector<std::size_t> &indices)
{
    std::vector<double> preds;
    std::vector<double> gold;
    preds.reserve(indices.size());
    gold.reserve(indices.size());
    for (std::size_t i : indices) {
        const double p = forward(params, encoded[i], false, 0).overall();
        if (!std::isfinite(p))
            throw NumericError{"non-finite validation prediction for " + records[i].pair_id};
        preds.push_back(clip_score(p));
        gold.push_back(records[i].scores.overall());
    }
    return pearson(preds, gold).as_optional();
}

bool better(const std::optional<double> &candidate, const std::optional<double> &incumbent)
{
    if (!candidate)
        return false;
    return !incumbent || *candidate > *incumbent;
}

} // namespace

FoldResult train_fold(const std::vector<ArticleRecord> &records, const std::vector<EncodedPair> &encoded,
                      const FoldAssignment &folds, int fold_index, const ModelConfig &model_cfg,
                      const LossConfig &loss_cfg, const OptimizerConfig &opt_cfg, std::uint64_t seed,
                      const EpochCallback &on_epoch)
{
    model_cfg.validate();
    loss_cfg.validate();
    opt_cfg.validate();
    if (encoded.size() != records.size())
        throw ConfigError{"encoded pairs are not aligned with the records"};
    if (fold_index < 0 || fold_index >= folds.k)
        throw ConfigError{"fold index " + std::to_string(fold_index) + " outside [0, " + std::to_string(folds.k) +
                          ")"};

    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const int f = folds.fold(records[i].pair_id);
        const auto source = source_pair_id(records[i].pair_id);
        if (source != records[i].pair_id && folds.fold_of.contains(source) && folds.fold(source) != f)
            throw DataError{"record " + records[i].pair_id + " is not in the fold of its source " +
                            std::string{source}};
        (f == fold_index ? val_idx : train_idx).push_back(i);
    }
    if (train_idx.empty())
        throw DataError{"fold " + std::to_string(fold_index) + " leaves an empty training split"};
    if (val_idx.empty())
        throw DataError{"fold " + std::to_string(fold_index) + " has an empty validation split"};

    const SeedPlan seeds = SeedPlan::from_global(seed);
    const auto fold_u = static_cast<std::uint64_t>(fold_index);
    const std::uint64_t init_seed = hash_combine(seeds.init, fold_u);
    const std::uint64_t dropout_seed = hash_combine(seeds.dropout, fold_u);
    const std::uint64_t sampling_seed = hash_combine(seeds.sampling, fold_u);

    ModelParameters params = init_model(model_cfg, init_seed);
    Gradients grads = zero_parameters<float>(model_cfg);
    Adam adam{model_cfg, opt_cfg};

    const std::size_t batch = opt_cfg.batch_size;
    const std::size_t steps_per_epoch = (train_idx.size() + batch - 1) / batch;
    const LinearSchedule schedule{opt_cfg.learning_rate, opt_cfg.warmup_rate, steps_per_epoch * opt_cfg.epochs};
    const auto forwards = static_cast<std::size_t>(loss_cfg.forwards);

    FoldResult result;
    result.fold_index = fold_index;
    std::size_t step = 0;
    std::vector<ForwardTape<float>> tapes(forwards);
    std::vector<PredictionVector> preds(forwards);

    for (std::size_t epoch = 1; epoch <= opt_cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = train_idx;
        Rng rng{hash_combine(sampling_seed, epoch)};
        rng.shuffle(std::span{order});

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch, ++step) {
            const std::size_t end = std::min(order.size(), start + batch);
            const double scale = 1.0 / static_cast<double>(end - start);
            for (auto *t : tensors(grads))
                std::fill(t->data.begin(), t->data.end(), 0.0f);

            double batch_loss = 0.0;
            for (std::size_t b = start; b < end; ++b) {
                const std::size_t i = order[b];
                for (std::size_t k = 0; k < forwards; ++k) {
                    tapes[k] = forward_with_tape(params, encoded[i], true,
                                                 training_dropout_seed(dropout_seed, step, i, k));
                    preds[k] = tapes[k].prediction();
                }
                const auto loss = rdrop_loss(preds, records[i].scores, loss_cfg);
                if (!std::isfinite(loss.total))
                    throw NumericError{"non-finite loss at step " + std::to_string(step) + " on " +
                                       records[i].pair_id};
                batch_loss += loss.total;
                auto dpred = rdrop_loss_gradient(preds, records[i].scores, loss_cfg);
                for (std::size_t k = 0; k < forwards; ++k) {
                    for (auto &g : dpred[k])
                        g *= scale;
                    accumulate_gradients(params, tapes[k], dpred[k], grads);
                }
            }
            epoch_loss += batch_loss;
            adam.step(params, grads, schedule.at(step));
        }

        EpochMetrics metrics;
        metrics.fold = fold_index;
        metrics.epoch = epoch;
        metrics.train_loss = epoch_loss / static_cast<double>(order.size());
        metrics.val_pearson = validation_pearson(params, records, encoded, val_idx);
        result.training_curve.push_back(metrics);
        if (epoch == 1 || better(metrics.val_pearson, result.best_val_pearson)) {
            result.best_val_pearson = metrics.val_pearson;
            result.best_epoch = epoch;
            result.best_checkpoint = params;
        }
        if (on_epoch)
            on_epoch(metrics);
    }
    return result;
}

std::vector<FoldResult> cross_validate(const std::vector<ArticleRecord> &records,
                                       const std::vector<EncodedPair> &encoded, const FoldAssignment &folds,
                                       const RunConfig &config, int jobs, const EpochCallback &on_epoch)
{
    config.validate();
    const auto k = static_cast<std::size_t>(folds.k);
    std::vector<FoldResult> results(k);
    const auto run = [&](std::size_t f) {
        results[f] = train_fold(records, encoded, folds, static_cast<int>(f), config.model, config.loss,
                                config.optimizer, config.seed, on_epoch);
    };

    const auto workers = static_cast<std::size_t>(std::clamp(jobs, 1, folds.k));
    if (workers == 1) {
        for (std::size_t f = 0; f < k; ++f)
            run(f);
        return results;
    }

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t f = next++; f < k; f = next++) {
                try {
                    run(f);
                } catch (...) {
                    std::lock_guard lock{error_mutex};
                    if (!first_error)
                        first_error = std::current_exception();
                }
            }
        });
    for (auto &t : pool)
        t.join();
    if (first_error)
        std::rethrow_exception(first_error);
    return results;
}

double dropout_disagreement(const ModelParameters &params, const std::vector<EncodedPair> &pairs,
                            std::uint64_t seed)
{
    if (pairs.empty())
        return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double a = forward(params, pairs[i], true, hash_combine(seed, 2 * i)).overall();
        const double b = forward(params, pairs[i], true, hash_combine(seed, 2 * i + 1)).overall();
        total += std::abs(a - b);
    }
    return total / static_cast<double>(pairs.size());
}

double evaluate_loss(const ModelParameters &params, const std::vector<ArticleRecord> &records,
                     const std::vector<EncodedPair> &encoded, const std::vector<std::size_t> &indices,
                     const LossConfig &loss_cfg)
{
    if (indices.empty())
        return 0.0;
    double total = 0.0;
    for (std::size_t i : indices)
        total += multi_label_loss(forward(params, encoded[i], false, 0), records[i].scores, loss_cfg.overall_weight)
                     .loss;
    return total / static_cast<double>(indices.size());
}

EnsembleModel make_ensemble(std::vector<FoldResult> folds)
{
    EnsembleModel ensemble;
    ensemble.members.reserve(folds.size());
    for (auto &f : folds)
        ensemble.members.push_back(std::move(f.best_checkpoint));
    return ensemble;
}

PredictionVector ensemble_predict(const EnsembleModel &ensemble, const EncodedPair &pair)
{
    if (ensemble.members.empty())
        throw ConfigError{"cannot predict with an empty ensemble"};
    PredictionVector mean;
    for (const auto &member : ensemble.members) {
        const auto p = forward(member, pair, false, 0);
        for (std::size_t j = 0; j < output_dim; ++j)
            mean[j] += p[j];
    }
    for (auto &v : mean.values)
        v /= static_cast<double>(ensemble.members.size());
    return mean;
}

} // namespace newsim
