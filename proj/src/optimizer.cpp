#include "newsim/optimizer.hpp"

#include "newsim/error.hpp"

#include <cmath>

namespace newsim {

void OptimizerConfig::validate() const
{
    if (!(learning_rate > 0.0))
        throw ConfigError{"learning_rate must be positive"};
    if (!(weight_decay >= 0.0))
        throw ConfigError{"weight_decay must be non-negative"};
    if (!(warmup_rate >= 0.0 && warmup_rate <= 1.0))
        throw ConfigError{"warmup_rate must lie in [0, 1]"};
    if (batch_size == 0)
        throw ConfigError{"batch_size must be positive"};
    if (epochs == 0)
        throw ConfigError{"epochs must be positive"};
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ConfigError{"Adam betas must lie in [0, 1)"};
    if (!(epsilon > 0.0))
        throw ConfigError{"Adam epsilon must be positive"};
}

nlohmann::json to_json(const OptimizerConfig &c)
{
    return {
        {"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay}, {"warmup_rate", c.warmup_rate},
        {"batch_size", c.batch_size},       {"epochs", c.epochs},             {"beta1", c.beta1},
        {"beta2", c.beta2},                 {"epsilon", c.epsilon},
    };
}

OptimizerConfig optimizer_config_from_json(const nlohmann::json &j)
{
    OptimizerConfig c;
    try {
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.warmup_rate = j.value("warmup_rate", c.warmup_rate);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.epochs = j.value("epochs", c.epochs);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.epsilon = j.value("epsilon", c.epsilon);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError{std::string{"invalid optimizer config: "} + e.what()};
    }
    c.validate();
    return c;
}

LinearSchedule::LinearSchedule(double peak, double warmup_rate, std::size_t total_steps)
    : peak_{peak},
      warmup_{static_cast<std::size_t>(std::llround(warmup_rate * static_cast<double>(total_steps)))},
      total_{total_steps}
{
}

double LinearSchedule::at(std::size_t step) const noexcept
{
    if (step >= total_)
        return 0.0;
    if (step < warmup_)
        return peak_ * static_cast<double>(step) / static_cast<double>(warmup_);
    return peak_ * static_cast<double>(total_ - step) / static_cast<double>(total_ - warmup_);
}

Adam::Adam(const ModelConfig &config, const OptimizerConfig &opts)
    : opts_{opts}, m_{zero_parameters<float>(config)}, v_{zero_parameters<float>(config)}
{
}

void Adam::step(ModelParameters &params, const Gradients &grads, double learning_rate)
{
    ++t_;
    const double correction1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double correction2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    const float b1 = static_cast<float>(opts_.beta1);
    const float b2 = static_cast<float>(opts_.beta2);
    const float step_size = static_cast<float>(learning_rate / correction1);
    const float inv_sqrt_c2 = static_cast<float>(1.0 / std::sqrt(correction2));
    const float eps = static_cast<float>(opts_.epsilon);
    const float decay = static_cast<float>(learning_rate * opts_.weight_decay);

    auto ps = tensors(params);
    const auto gs = tensors(grads);
    auto ms = tensors(m_);
    auto vs = tensors(v_);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        float *p = ps[i]->data.data();
        const float *g = gs[i]->data.data();
        float *m = ms[i]->data.data();
        float *v = vs[i]->data.data();
        const std::size_t n = ps[i]->size();
        for (std::size_t k = 0; k < n; ++k) {
            m[k] = b1 * m[k] + (1.0f - b1) * g[k];
            v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
            p[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_c2 + eps) + decay * p[k];
        }
    }
}

} // namespace newsim
