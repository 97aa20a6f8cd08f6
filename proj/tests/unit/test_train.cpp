#include "newsim/error.hpp"
#include "newsim/eval.hpp"
#include "newsim/train.hpp"

#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"

using namespace newsim;
using newsim::testing::make_synthetic_corpus;
using newsim::testing::SyntheticSpec;

namespace {

ModelConfig tiny_model()
{
    ModelConfig c;
    c.vocab_size = 512;
    c.embed_dim = 8;
    c.num_layers = 1;
    c.num_heads = 1;
    c.ff_dim = 16;
    return c;
}

OptimizerConfig quick_optimizer(std::size_t epochs)
{
    OptimizerConfig o;
    o.learning_rate = 3e-3;
    o.epochs = epochs;
    o.batch_size = 16;
    return o;
}

// Enough updates for the outputs to leave the clipping floor, so validation
// pearson is defined.
OptimizerConfig moving_optimizer(std::size_t epochs)
{
    auto o = quick_optimizer(epochs);
    o.learning_rate = 5e-2;
    o.batch_size = 4;
    return o;
}

struct Corpus {
    std::vector<ArticleRecord> records;
    std::vector<EncodedPair> encoded;
};

Corpus small_corpus(std::size_t pairs, std::uint64_t seed)
{
    SyntheticSpec spec;
    spec.pairs = pairs;
    spec.seed = seed;
    spec.topics = 4;
    spec.words_per_topic = 10;
    spec.filler_words = 10;
    spec.topical_words = 10;
    spec.fillers_per_article = 3;
    Corpus c;
    c.records = make_synthetic_corpus(spec);
    c.encoded = encode_records(c.records, Tokenizer{512}, TruncationPolicy{20, 8});
    return c;
}

ModelParameters constant_model(double overall)
{
    auto params = init_model(tiny_model(), 1);
    for (auto &dense : params.head)
        std::fill(dense.weight.data.begin(), dense.weight.data.end(), 0.0f);
    auto &bias = params.head.back().bias;
    std::fill(bias.data.begin(), bias.data.end(), 0.0f);
    bias.data[ScoreVector::overall_index] = static_cast<float>(overall);
    return params;
}

EncodedPair some_pair()
{
    return assemble_pair(TokenSequence{{10, 11, 12}}, TokenSequence{{13, 14}});
}

} // namespace

TEST_CASE("run config JSON round-trip and validation")
{
    RunConfig c;
    c.model = tiny_model();
    c.loss = {0.75, 0.3, 2};
    c.optimizer = quick_optimizer(7);
    c.policy = "h128t128";
    c.folds = 5;
    c.seed = 0xfeedfacecafebeefULL;
    const auto j = to_json(c);
    const auto back = run_config_from_json(j);
    CHECK(back.model == c.model);
    CHECK(back.loss == c.loss);
    CHECK(back.optimizer == c.optimizer);
    CHECK(back.policy == c.policy);
    CHECK(back.folds == 5);
    CHECK(back.seed == c.seed);
    CHECK(to_json(back) == j);

    CHECK_NOTHROW(run_config_from_json(nlohmann::json::object()));
    CHECK_THROWS_AS(run_config_from_json(nlohmann::json::array()), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"folds", "ten"}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"folds", 1}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"loss", {{"forwards", 4}}}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"policy", "h1t1"}}), ConfigError);
}

TEST_CASE("epoch metrics JSON keeps undefined pearson as null")
{
    EpochMetrics m{2, 3, 0.5, std::nullopt};
    const auto j = to_json(m);
    CHECK(j["val_pearson"].is_null());
    const auto back = epoch_metrics_from_json(j);
    CHECK(back.fold == 2);
    CHECK(back.epoch == 3);
    CHECK(back.train_loss == 0.5);
    CHECK_FALSE(back.val_pearson.has_value());
    m.val_pearson = 0.25;
    CHECK(epoch_metrics_from_json(to_json(m)).val_pearson == 0.25);
    CHECK_THROWS_AS(epoch_metrics_from_json(nlohmann::json{{"fold", 1}}), DataError);
}

TEST_CASE("seed plan streams are distinct")
{
    const auto a = SeedPlan::from_global(1);
    const auto b = SeedPlan::from_global(2);
    CHECK(a.split != a.init);
    CHECK(a.init != a.dropout);
    CHECK(a.dropout != a.sampling);
    CHECK(a.split != b.split);
    CHECK(training_dropout_seed(5, 0, 0, 0) != training_dropout_seed(5, 0, 0, 1));
    CHECK(training_dropout_seed(5, 0, 0, 0) != training_dropout_seed(5, 0, 1, 0));
    CHECK(training_dropout_seed(5, 0, 0, 0) != training_dropout_seed(5, 1, 0, 0));
}

TEST_CASE("ensemble prediction is the member mean")
{
    const auto pair = some_pair();
    const auto member = init_model(tiny_model(), 3);

    EnsembleModel single{{member}};
    CHECK(ensemble_predict(single, pair) == forward(member, pair, false, 0));

    EnsembleModel two{{constant_model(2.0), constant_model(3.0)}};
    CHECK(ensemble_predict(two, pair).overall() == doctest::Approx(2.5).epsilon(1e-6));

    EnsembleModel three{{init_model(tiny_model(), 4), init_model(tiny_model(), 5), init_model(tiny_model(), 6)}};
    EnsembleModel permuted{{three.members[2], three.members[0], three.members[1]}};
    const auto p = ensemble_predict(three, pair);
    const auto q = ensemble_predict(permuted, pair);
    for (std::size_t j = 0; j < output_dim; ++j)
        CHECK(p[j] == doctest::Approx(q[j]).epsilon(1e-12));

    CHECK_THROWS_AS(ensemble_predict(EnsembleModel{}, pair), ConfigError);
}

TEST_CASE("ensemble predictions are not clipped before averaging")
{
    EnsembleModel ensemble{{constant_model(5.0), constant_model(2.0)}};
    const auto mean = ensemble_predict(ensemble, some_pair()).overall();
    CHECK(mean == doctest::Approx(3.5).epsilon(1e-6));
    EnsembleModel high{{constant_model(5.0), constant_model(4.5)}};
    CHECK(ensemble_predict(high, some_pair()).overall() > 4.0);
}

TEST_CASE("train_fold replays exactly under the same seed")
{
    const auto corpus = small_corpus(40, 2);
    const auto folds = split_kfold(corpus.records, 4, 9);
    const LossConfig loss{0.75, 0.3, 2};
    const auto a = train_fold(corpus.records, corpus.encoded, folds, 1, tiny_model(), loss, quick_optimizer(3), 11);
    const auto b = train_fold(corpus.records, corpus.encoded, folds, 1, tiny_model(), loss, quick_optimizer(3), 11);
    CHECK(a.best_checkpoint == b.best_checkpoint);
    CHECK(a.best_epoch == b.best_epoch);
    CHECK(a.best_val_pearson == b.best_val_pearson);
    REQUIRE(a.training_curve.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(a.training_curve[e].train_loss == b.training_curve[e].train_loss);
        CHECK(a.training_curve[e].val_pearson == b.training_curve[e].val_pearson);
    }
    const auto c = train_fold(corpus.records, corpus.encoded, folds, 1, tiny_model(), loss, quick_optimizer(3), 12);
    CHECK_FALSE(c.best_checkpoint == a.best_checkpoint);
}

TEST_CASE("training loss falls on a 200-sample synthetic corpus")
{
    for (std::uint64_t seed : {1, 2, 3}) {
        CAPTURE(seed);
        const auto corpus = small_corpus(200, seed);
        const auto folds = split_kfold(corpus.records, 5, seed);
        const auto r = train_fold(corpus.records, corpus.encoded, folds, 0, tiny_model(), LossConfig{},
                                  quick_optimizer(8), seed);
        REQUIRE(r.training_curve.size() == 8);
        CHECK(r.training_curve.back().train_loss < r.training_curve.front().train_loss);
    }
}

TEST_CASE("best epoch is the first maximum of the validation curve")
{
    const auto corpus = small_corpus(60, 4);
    const auto folds = split_kfold(corpus.records, 3, 4);
    std::vector<EpochMetrics> seen;
    const auto r = train_fold(corpus.records, corpus.encoded, folds, 2, tiny_model(), LossConfig{},
                              moving_optimizer(6), 4, [&](const EpochMetrics &m) { seen.push_back(m); });
    REQUIRE(seen.size() == 6);
    REQUIRE(r.training_curve.size() == 6);
    std::optional<double> best;
    std::size_t best_epoch = 0;
    for (const auto &m : r.training_curve) {
        CHECK(m.fold == 2);
        if (m.val_pearson && (!best || *m.val_pearson > *best)) {
            best = m.val_pearson;
            best_epoch = m.epoch;
        }
    }
    REQUIRE(best.has_value());
    CHECK(r.best_val_pearson == best);
    CHECK(r.best_epoch == best_epoch);
    for (std::size_t e = 0; e < 6; ++e) {
        CHECK(seen[e].epoch == e + 1);
        CHECK(seen[e].val_pearson == r.training_curve[e].val_pearson);
    }
}

TEST_CASE("the chosen checkpoint reproduces the best validation pearson")
{
    const auto corpus = small_corpus(60, 5);
    const auto folds = split_kfold(corpus.records, 3, 5);
    const auto r = train_fold(corpus.records, corpus.encoded, folds, 0, tiny_model(), LossConfig{},
                              moving_optimizer(6), 5);
    REQUIRE(r.best_val_pearson.has_value());
    std::vector<double> preds, gold;
    for (std::size_t i = 0; i < corpus.records.size(); ++i)
        if (folds.fold(corpus.records[i].pair_id) == 0) {
            preds.push_back(clip_score(forward(r.best_checkpoint, corpus.encoded[i], false, 0).overall()));
            gold.push_back(corpus.records[i].scores.overall());
        }
    CHECK(pearson(preds, gold).value() == doctest::Approx(*r.best_val_pearson).epsilon(1e-12));
}

TEST_CASE("validation never contains a record whose source trains")
{
    auto corpus = small_corpus(30, 6);
    auto folds = split_kfold(corpus.records, 3, 6);
    auto copy = corpus.records.front();
    copy.pair_id += "_bt";
    copy.provenance = Provenance::back_translated;
    corpus.records.push_back(copy);
    corpus.encoded.push_back(corpus.encoded.front());
    CHECK(folds.fold(copy.pair_id) == folds.fold(corpus.records.front().pair_id));
    CHECK_NOTHROW(train_fold(corpus.records, corpus.encoded, folds, 0, tiny_model(), LossConfig{},
                             quick_optimizer(1), 1));

    const int source_fold = folds.fold(corpus.records.front().pair_id);
    folds.fold_of[copy.pair_id] = (source_fold + 1) % 3;
    CHECK_THROWS_AS(train_fold(corpus.records, corpus.encoded, folds, 0, tiny_model(), LossConfig{},
                               quick_optimizer(1), 1),
                    DataError);
}

TEST_CASE("train_fold rejects empty splits and bad arguments")
{
    const auto corpus = small_corpus(12, 7);
    FoldAssignment folds;
    folds.k = 3;
    for (const auto &r : corpus.records)
        folds.fold_of[r.pair_id] = 0;
    CHECK_THROWS_AS(train_fold(corpus.records, corpus.encoded, folds, 0, tiny_model(), LossConfig{},
                               quick_optimizer(1), 1),
                    DataError);
    CHECK_THROWS_AS(train_fold(corpus.records, corpus.encoded, folds, 1, tiny_model(), LossConfig{},
                               quick_optimizer(1), 1),
                    DataError);
    CHECK_THROWS_AS(train_fold(corpus.records, corpus.encoded, folds, 3, tiny_model(), LossConfig{},
                               quick_optimizer(1), 1),
                    ConfigError);
    auto fewer = corpus.encoded;
    fewer.pop_back();
    CHECK_THROWS_AS(train_fold(corpus.records, fewer, split_kfold(corpus.records, 3, 1), 0, tiny_model(),
                               LossConfig{}, quick_optimizer(1), 1),
                    ConfigError);
}

TEST_CASE("a non-finite label stops training with a numeric error")
{
    auto corpus = small_corpus(12, 8);
    corpus.records[3].scores.values[ScoreVector::overall_index] = std::numeric_limits<double>::quiet_NaN();
    const auto folds = split_kfold(corpus.records, 3, 1);
    const int f = (folds.fold(corpus.records[3].pair_id) + 1) % 3;
    CHECK_THROWS_AS(train_fold(corpus.records, corpus.encoded, folds, f, tiny_model(), LossConfig{},
                               quick_optimizer(1), 1),
                    NumericError);
}

TEST_CASE("cross_validate is independent of the worker count")
{
    const auto corpus = small_corpus(45, 9);
    RunConfig config;
    config.model = tiny_model();
    config.optimizer = quick_optimizer(2);
    config.folds = 3;
    config.seed = 3;
    const auto folds = split_kfold(corpus.records, config.folds, config.seed);
    const auto serial = cross_validate(corpus.records, corpus.encoded, folds, config, 1);
    const auto parallel = cross_validate(corpus.records, corpus.encoded, folds, config, 2);
    REQUIRE(serial.size() == 3);
    REQUIRE(parallel.size() == 3);
    for (std::size_t f = 0; f < 3; ++f) {
        CHECK(serial[f].fold_index == static_cast<int>(f));
        CHECK(serial[f].best_checkpoint == parallel[f].best_checkpoint);
        CHECK(serial[f].best_epoch == parallel[f].best_epoch);
    }
    CHECK(make_ensemble(serial).members.size() == 3);
}

TEST_CASE("cross_validate reports a failing fold")
{
    auto corpus = small_corpus(12, 10);
    corpus.records[0].scores.values[0] = std::numeric_limits<double>::infinity();
    RunConfig config;
    config.model = tiny_model();
    config.optimizer = quick_optimizer(1);
    config.folds = 3;
    const auto folds = split_kfold(corpus.records, 3, 0);
    CHECK_THROWS_AS(cross_validate(corpus.records, corpus.encoded, folds, config, 2), NumericError);
}

TEST_CASE("dropout disagreement and evaluation loss")
{
    const auto corpus = small_corpus(10, 11);
    auto cfg = tiny_model();
    cfg.dropout_p = 0.0;
    const auto deterministic = init_model(cfg, 2);
    CHECK(dropout_disagreement(deterministic, corpus.encoded, 4) == 0.0);
    cfg.dropout_p = 0.3;
    const auto noisy = init_model(cfg, 2);
    CHECK(dropout_disagreement(noisy, corpus.encoded, 4) > 0.0);
    CHECK(dropout_disagreement(noisy, corpus.encoded, 4) == dropout_disagreement(noisy, corpus.encoded, 4));
    CHECK(dropout_disagreement(noisy, {}, 4) == 0.0);

    const std::vector<std::size_t> idx{1, 4, 7};
    double expected = 0;
    for (std::size_t i : idx)
        expected += multi_label_loss(forward(noisy, corpus.encoded[i], false, 0), corpus.records[i].scores, 0.75).loss;
    CHECK(evaluate_loss(noisy, corpus.records, corpus.encoded, idx, LossConfig{0.75, 0.3, 2}) ==
          doctest::Approx(expected / 3).epsilon(1e-12));
}
