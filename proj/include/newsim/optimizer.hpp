#pragma once

#include "newsim/model.hpp"

#include <cstddef>

#include "json.hpp"

namespace newsim {

struct OptimizerConfig {
    double learning_rate = 2e-5; // peak
    double weight_decay = 1e-4;  // decoupled
    double warmup_rate = 0.1;
    std::size_t batch_size = 32;
    std::size_t epochs = 20;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    /// Throws ConfigError.
    void validate() const;

    bool operator==(const OptimizerConfig &) const = default;
};

nlohmann::json to_json(const OptimizerConfig &c);
OptimizerConfig optimizer_config_from_json(const nlohmann::json &j);

// Linear warmup from 0 to the peak rate over round(warmup_rate * total)
// steps, then linear decay back to 0 at total_steps.
class LinearSchedule {
public:
    LinearSchedule(double peak, double warmup_rate, std::size_t total_steps);

    double at(std::size_t step) const noexcept;

    std::size_t warmup_steps() const noexcept { return warmup_; }
    std::size_t total_steps() const noexcept { return total_; }

private:
    double peak_;
    std::size_t warmup_;
    std::size_t total_;
};

// Adam with decoupled weight decay.
class Adam {
public:
    Adam(const ModelConfig &config, const OptimizerConfig &opts);

    void step(ModelParameters &params, const Gradients &grads, double learning_rate);

    std::size_t steps_taken() const noexcept { return t_; }

private:
    OptimizerConfig opts_;
    Gradients m_;
    Gradients v_;
    std::size_t t_ = 0;
};

} // namespace newsim
