#include "gradcheck.hpp"

#include "newsim/rng.hpp"

#include <algorithm>
#include <cmath>

namespace newsim::testing {

GradCheckResult check_gradients(const ModelConfig &config, const LossConfig &loss, std::uint64_t seed,
                                const GradCheckOptions &options)
{
    auto params = convert_parameters<double>(init_model(config, seed));
    Rng rng{hash_combine(seed, 0x6c)};
    // Initial weights are nearly zero, which leaves the layer norms almost
    // singular; random offsets give a well-conditioned point to probe.
    for (auto *t : tensors(params))
        for (auto &v : t->data)
            v += rng.normal(0.0, options.weight_scale);

    TokenSequence d1, d2;
    const auto content = config.vocab_size - first_content_id;
    for (std::size_t i = 0; i < options.doc_tokens; ++i) {
        d1.ids.push_back(static_cast<TokenId>(first_content_id + rng.below(content)));
        d2.ids.push_back(static_cast<TokenId>(first_content_id + rng.below(content)));
    }
    const auto pair = assemble_pair(d1, d2);
    ScoreVector label;
    for (auto &v : label.values)
        v = 1.0 + 3.0 * rng.uniform();

    const auto forwards = static_cast<std::size_t>(loss.forwards);
    std::vector<std::uint64_t> dropout_seeds;
    for (std::size_t k = 0; k < forwards; ++k)
        dropout_seeds.push_back(rng.next());

    const auto total_loss = [&](const BasicParameters<double> &p) {
        std::vector<PredictionVector> preds;
        for (auto s : dropout_seeds)
            preds.push_back(forward(p, pair, true, s));
        return rdrop_loss(preds, label, loss).total;
    };

    std::vector<ForwardTape<double>> tapes;
    std::vector<PredictionVector> preds;
    for (auto s : dropout_seeds) {
        tapes.push_back(forward_with_tape(params, pair, true, s));
        preds.push_back(tapes.back().prediction());
    }
    const auto dpred = rdrop_loss_gradient(preds, label, loss);
    auto grads = zero_parameters<double>(config);
    for (std::size_t k = 0; k < forwards; ++k)
        accumulate_gradients(params, tapes[k], std::span<const double, output_dim>{dpred[k]}, grads);

    GradCheckResult result;
    const auto names = tensor_names(config);
    auto p_tensors = tensors(params);
    const auto g_tensors = tensors(grads);
    for (std::size_t t = 0; t < p_tensors.size(); ++t)
        for (std::size_t i = 0; i < p_tensors[t]->data.size(); ++i) {
            double &x = p_tensors[t]->data[i];
            const double saved = x;
            const auto at = [&](double offset) {
                x = saved + offset;
                return total_loss(params);
            };
            const double h = options.step;
            // Five-point central stencil; its O(h^4) error stays far below the tolerance.
            const double numeric = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
            x = saved;
            const double analytic = g_tensors[t]->data[i];
            const double rel =
                std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), options.floor});
            ++result.parameters_checked;
            if (rel > result.worst_relative_error) {
                result.worst_relative_error = rel;
                result.worst_parameter = names[t] + "[" + std::to_string(i) + "]";
            }
        }
    return result;
}

} // namespace newsim::testing
