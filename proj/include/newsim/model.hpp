#pragma once

#include "newsim/tokenize.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace newsim {

inline constexpr std::size_t output_dim = 7;

struct ModelConfig {
    std::size_t vocab_size = default_vocab_size;
    std::size_t embed_dim = 64;
    std::size_t num_layers = 2;
    std::size_t num_heads = 2;
    std::size_t ff_dim = 128;
    double dropout_p = 0.1;
    std::size_t max_positions = 520;
    int head_layers = 1;        // 1, 2 or 3 dense layers on top of [CLS]
    bool head_activation = false; // GELU between head layers

    /// Throws ConfigError.
    void validate() const;

    /// Layer widths of the regression head, input first: {d, 7}, {d, 32, 7}
    /// or {d, 48, 16, 7}.
    std::vector<std::size_t> head_widths() const;

    bool operator==(const ModelConfig &) const = default;
};

nlohmann::json to_json(const ModelConfig &config);
ModelConfig model_config_from_json(const nlohmann::json &j);

// Dense row-major matrix. Bias vectors are 1 x n.
template <typename T>
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, T fill = T{}) : rows{r}, cols{c}, data(r * c, fill) {}

    std::size_t size() const noexcept { return data.size(); }
    T *row(std::size_t r) noexcept { return data.data() + r * cols; }
    const T *row(std::size_t r) const noexcept { return data.data() + r * cols; }
    T &operator()(std::size_t r, std::size_t c) noexcept { return data[r * cols + c]; }
    T operator()(std::size_t r, std::size_t c) const noexcept { return data[r * cols + c]; }
    bool operator==(const Matrix &) const = default;
};

template <typename T>
struct DenseParams {
    Matrix<T> weight; // in x out
    Matrix<T> bias;   // 1 x out
    bool operator==(const DenseParams &) const = default;
};

template <typename T>
struct NormParams {
    Matrix<T> gain;
    Matrix<T> bias;
    bool operator==(const NormParams &) const = default;
};

template <typename T>
struct EncoderLayerParams {
    NormParams<T> attn_norm;
    DenseParams<T> query;
    DenseParams<T> key;
    DenseParams<T> value;
    DenseParams<T> attn_out;
    NormParams<T> ff_norm;
    DenseParams<T> ff_in;
    DenseParams<T> ff_out;
    bool operator==(const EncoderLayerParams &) const = default;
};

// All trainable tensors of the cross-encoder. The same structure is used for
// gradients and optimizer moments.
template <typename T>
struct BasicParameters {
    ModelConfig config;
    Matrix<T> token_embedding;    // V x d
    Matrix<T> position_embedding; // max_positions x d
    std::vector<EncoderLayerParams<T>> layers;
    NormParams<T> final_norm;
    std::vector<DenseParams<T>> head;

    bool operator==(const BasicParameters &) const = default;
};

using ModelParameters = BasicParameters<float>;
using Gradients = BasicParameters<float>;

struct NamedTensorRef {
    std::string name;
    std::size_t index;
};

/// Tensors in checkpoint order: token_embedding, position_embedding, then per
/// layer attn_norm.{gain,bias}, {query,key,value,attn_out}.{weight,bias},
/// ff_norm.{gain,bias}, {ff_in,ff_out}.{weight,bias}; final_norm.{gain,bias};
/// head.<i>.{weight,bias}.
template <typename T>
std::vector<Matrix<T> *> tensors(BasicParameters<T> &params);
template <typename T>
std::vector<const Matrix<T> *> tensors(const BasicParameters<T> &params);

/// Dotted names aligned with tensors().
std::vector<std::string> tensor_names(const ModelConfig &config);

/// All-zero parameters with the shapes implied by `config`.
template <typename T>
BasicParameters<T> zero_parameters(const ModelConfig &config);

std::size_t parameter_count(const ModelConfig &config);

/// Weights ~ N(0, 0.02), dense biases 0, norm gains 1 and biases 0.
ModelParameters init_model(const ModelConfig &config, std::uint64_t seed);

template <typename To, typename From>
BasicParameters<To> convert_parameters(const BasicParameters<From> &params);

struct PredictionVector {
    std::array<double, output_dim> values{};

    double overall() const noexcept { return values[4]; }
    double &operator[](std::size_t i) noexcept { return values[i]; }
    double operator[](std::size_t i) const noexcept { return values[i]; }
    bool operator==(const PredictionVector &) const = default;
};

/// Dropout keep/drop decision for one unit; shared by the model and tests.
bool dropout_keeps(std::uint64_t dropout_seed, std::uint64_t site, std::size_t index, double p) noexcept;

namespace dropout_site {
inline constexpr std::uint64_t embedding = 1;
constexpr std::uint64_t attention(std::size_t layer) noexcept { return 2 + 2 * layer; }
constexpr std::uint64_t feed_forward(std::size_t layer) noexcept { return 3 + 2 * layer; }
constexpr std::uint64_t head_input(std::size_t dense) noexcept { return 1000 + dense; }
} // namespace dropout_site

template <typename T>
struct LayerTape;

// Intermediate values of one forward pass, consumed by backward(). A tape is
// bound to the parameter object it was recorded with.
template <typename T>
class ForwardTape {
public:
    ForwardTape();
    ~ForwardTape();
    ForwardTape(ForwardTape &&) noexcept;
    ForwardTape &operator=(ForwardTape &&) noexcept;

    const PredictionVector &prediction() const noexcept { return prediction_; }
    bool train_mode() const noexcept { return train_mode_; }
    std::uint64_t dropout_seed() const noexcept { return dropout_seed_; }

private:
    template <typename U>
    friend ForwardTape<U> forward_with_tape(const BasicParameters<U> &, const EncodedPair &, bool, std::uint64_t);
    template <typename U>
    friend void accumulate_gradients(const BasicParameters<U> &, const ForwardTape<U> &,
                                     std::span<const double, output_dim>, BasicParameters<U> &);

    const void *params_ = nullptr;
    std::vector<TokenId> ids_;
    bool train_mode_ = false;
    std::uint64_t dropout_seed_ = 0;
    Matrix<T> embed_mask_;
    std::vector<LayerTape<T>> layers_;
    Matrix<T> final_xhat_;
    T final_rstd_{};
    std::vector<Matrix<T>> head_inputs_;    // after dropout, per dense layer
    std::vector<Matrix<T>> head_pre_act_;   // dense outputs before activation
    std::vector<Matrix<T>> head_masks_;
    PredictionVector prediction_;
};

/// Throws ConfigError when the pair exceeds max_positions or holds an id
/// outside the vocabulary.
template <typename T>
ForwardTape<T> forward_with_tape(const BasicParameters<T> &params, const EncodedPair &pair, bool train_mode,
                                 std::uint64_t dropout_seed);

template <typename T>
PredictionVector forward(const BasicParameters<T> &params, const EncodedPair &pair, bool train_mode,
                         std::uint64_t dropout_seed)
{
    return forward_with_tape(params, pair, train_mode, dropout_seed).prediction();
}

/// Adds d(loss)/d(params) to `grads`, given d(loss)/d(prediction).
template <typename T>
void accumulate_gradients(const BasicParameters<T> &params, const ForwardTape<T> &tape,
                          std::span<const double, output_dim> loss_gradient, BasicParameters<T> &grads);

template <typename T>
BasicParameters<T> backward(const BasicParameters<T> &params, const ForwardTape<T> &tape,
                            std::span<const double, output_dim> loss_gradient)
{
    auto grads = zero_parameters<T>(params.config);
    accumulate_gradients(params, tape, loss_gradient, grads);
    return grads;
}

} // namespace newsim
