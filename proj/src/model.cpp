#include "newsim/model.hpp"

#include "newsim/error.hpp"
#include "newsim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace newsim {

void ModelConfig::validate() const
{
    if (vocab_size <= static_cast<std::size_t>(first_content_id))
        throw ConfigError{"vocab_size must exceed the 4 reserved ids"};
    if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0)
        throw ConfigError{"embed_dim must be a positive multiple of num_heads"};
    if (num_layers == 0)
        throw ConfigError{"num_layers must be positive"};
    if (ff_dim == 0)
        throw ConfigError{"ff_dim must be positive"};
    if (!(dropout_p >= 0.0 && dropout_p < 1.0))
        throw ConfigError{"dropout_p must lie in [0, 1)"};
    if (max_positions < 515)
        throw ConfigError{"max_positions must be at least 515"};
    if (head_layers < 1 || head_layers > 3)
        throw ConfigError{"head_layers must be 1, 2 or 3"};
}

std::vector<std::size_t> ModelConfig::head_widths() const
{
    switch (head_layers) {
    case 2: return {embed_dim, 32, output_dim};
    case 3: return {embed_dim, 48, 16, output_dim};
    default: return {embed_dim, output_dim};
    }
}

nlohmann::json to_json(const ModelConfig &c)
{
    return {
        {"vocab_size", c.vocab_size},
        {"embed_dim", c.embed_dim},
        {"num_layers", c.num_layers},
        {"num_heads", c.num_heads},
        {"ff_dim", c.ff_dim},
        {"dropout_p", c.dropout_p},
        {"max_positions", c.max_positions},
        {"head_layers", c.head_layers},
        {"head_activation", c.head_activation},
    };
}

ModelConfig model_config_from_json(const nlohmann::json &j)
{
    ModelConfig c;
    try {
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.embed_dim = j.value("embed_dim", c.embed_dim);
        c.num_layers = j.value("num_layers", c.num_layers);
        c.num_heads = j.value("num_heads", c.num_heads);
        c.ff_dim = j.value("ff_dim", c.ff_dim);
        c.dropout_p = j.value("dropout_p", c.dropout_p);
        c.max_positions = j.value("max_positions", c.max_positions);
        c.head_layers = j.value("head_layers", c.head_layers);
        c.head_activation = j.value("head_activation", c.head_activation);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError{std::string{"invalid model config: "} + e.what()};
    }
    c.validate();
    return c;
}

template <typename T>
std::vector<Matrix<T> *> tensors(BasicParameters<T> &p)
{
    std::vector<Matrix<T> *> out{&p.token_embedding, &p.position_embedding};
    for (auto &layer : p.layers) {
        out.insert(out.end(), {&layer.attn_norm.gain, &layer.attn_norm.bias, &layer.query.weight,
                               &layer.query.bias, &layer.key.weight, &layer.key.bias, &layer.value.weight,
                               &layer.value.bias, &layer.attn_out.weight, &layer.attn_out.bias,
                               &layer.ff_norm.gain, &layer.ff_norm.bias, &layer.ff_in.weight, &layer.ff_in.bias,
                               &layer.ff_out.weight, &layer.ff_out.bias});
    }
    out.push_back(&p.final_norm.gain);
    out.push_back(&p.final_norm.bias);
    for (auto &dense : p.head) {
        out.push_back(&dense.weight);
        out.push_back(&dense.bias);
    }
    return out;
}

template <typename T>
std::vector<const Matrix<T> *> tensors(const BasicParameters<T> &p)
{
    auto mutable_refs = tensors(const_cast<BasicParameters<T> &>(p));
    return {mutable_refs.begin(), mutable_refs.end()};
}

std::vector<std::string> tensor_names(const ModelConfig &config)
{
    std::vector<std::string> names{"token_embedding", "position_embedding"};
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        const std::string prefix = "layers." + std::to_string(l) + ".";
        for (const char *leaf : {"attn_norm.gain", "attn_norm.bias", "query.weight", "query.bias", "key.weight",
                                 "key.bias", "value.weight", "value.bias", "attn_out.weight", "attn_out.bias",
                                 "ff_norm.gain", "ff_norm.bias", "ff_in.weight", "ff_in.bias", "ff_out.weight",
                                 "ff_out.bias"})
            names.push_back(prefix + leaf);
    }
    names.emplace_back("final_norm.gain");
    names.emplace_back("final_norm.bias");
    for (int i = 0; i < config.head_layers; ++i) {
        names.push_back("head." + std::to_string(i) + ".weight");
        names.push_back("head." + std::to_string(i) + ".bias");
    }
    return names;
}

namespace {

template <typename T>
DenseParams<T> zero_dense(std::size_t in, std::size_t out)
{
    return {Matrix<T>(in, out), Matrix<T>(1, out)};
}

template <typename T>
NormParams<T> zero_norm(std::size_t d)
{
    return {Matrix<T>(1, d), Matrix<T>(1, d)};
}

} // namespace

template <typename T>
BasicParameters<T> zero_parameters(const ModelConfig &config)
{
    config.validate();
    const std::size_t d = config.embed_dim;
    BasicParameters<T> p;
    p.config = config;
    p.token_embedding = Matrix<T>(config.vocab_size, d);
    p.position_embedding = Matrix<T>(config.max_positions, d);
    p.layers.resize(config.num_layers);
    for (auto &layer : p.layers) {
        layer.attn_norm = zero_norm<T>(d);
        layer.query = zero_dense<T>(d, d);
        layer.key = zero_dense<T>(d, d);
        layer.value = zero_dense<T>(d, d);
        layer.attn_out = zero_dense<T>(d, d);
        layer.ff_norm = zero_norm<T>(d);
        layer.ff_in = zero_dense<T>(d, config.ff_dim);
        layer.ff_out = zero_dense<T>(config.ff_dim, d);
    }
    p.final_norm = zero_norm<T>(d);
    const auto widths = config.head_widths();
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
        p.head.push_back(zero_dense<T>(widths[i], widths[i + 1]));
    return p;
}

std::size_t parameter_count(const ModelConfig &config)
{
    const auto p = zero_parameters<float>(config);
    std::size_t n = 0;
    for (const auto *t : tensors(p))
        n += t->size();
    return n;
}

ModelParameters init_model(const ModelConfig &config, std::uint64_t seed)
{
    auto p = zero_parameters<float>(config);
    Rng rng{seed};
    const auto draw = [&](Matrix<float> &m) {
        for (auto &v : m.data)
            v = static_cast<float>(rng.normal(0.0, 0.02));
    };
    const auto ones = [](Matrix<float> &m) { std::fill(m.data.begin(), m.data.end(), 1.0f); };

    draw(p.token_embedding);
    draw(p.position_embedding);
    for (auto &layer : p.layers) {
        ones(layer.attn_norm.gain);
        draw(layer.query.weight);
        draw(layer.key.weight);
        draw(layer.value.weight);
        draw(layer.attn_out.weight);
        ones(layer.ff_norm.gain);
        draw(layer.ff_in.weight);
        draw(layer.ff_out.weight);
    }
    ones(p.final_norm.gain);
    for (auto &dense : p.head)
        draw(dense.weight);
    return p;
}

template <typename To, typename From>
BasicParameters<To> convert_parameters(const BasicParameters<From> &params)
{
    auto out = zero_parameters<To>(params.config);
    const auto src = tensors(params);
    const auto dst = tensors(out);
    for (std::size_t i = 0; i < src.size(); ++i)
        std::transform(src[i]->data.begin(), src[i]->data.end(), dst[i]->data.begin(),
                       [](From v) { return static_cast<To>(v); });
    return out;
}

bool dropout_keeps(std::uint64_t dropout_seed, std::uint64_t site, std::size_t index, double p) noexcept
{
    if (p <= 0.0)
        return true;
    return to_unit(hash_combine(hash_combine(dropout_seed, site), index)) >= p;
}

template <typename T>
struct LayerTape {
    std::size_t rows = 0; // rows carried past attention (1 in the last layer)
    Matrix<T> attn_xhat;
    std::vector<T> attn_rstd;
    Matrix<T> attn_in; // normalized input, all positions
    Matrix<T> q, k, v;
    std::vector<T> probs; // heads x rows x length
    Matrix<T> context;
    Matrix<T> attn_mask;
    Matrix<T> ff_xhat;
    std::vector<T> ff_rstd;
    Matrix<T> ff_in; // normalized input
    Matrix<T> ff_pre;
    Matrix<T> ff_act;
    Matrix<T> ff_mask;
};

template <typename T>
ForwardTape<T>::ForwardTape() = default;
template <typename T>
ForwardTape<T>::~ForwardTape() = default;
template <typename T>
ForwardTape<T>::ForwardTape(ForwardTape &&) noexcept = default;
template <typename T>
ForwardTape<T> &ForwardTape<T>::operator=(ForwardTape &&) noexcept = default;

namespace {

constexpr double norm_eps = 1e-5;

template <typename T>
T gelu(T x)
{
    return T(0.5) * x * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
}

template <typename T>
T gelu_grad(T x)
{
    const T cdf = T(0.5) * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
    const T pdf = std::exp(T(-0.5) * x * x) * T(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    return cdf + x * pdf;
}

// y[r] = x[r] W + b for the first `rows` rows of x.
template <typename T>
void dense_forward(const Matrix<T> &x, std::size_t rows, const DenseParams<T> &p, Matrix<T> &y)
{
    const std::size_t in = p.weight.rows;
    const std::size_t out = p.weight.cols;
    y = Matrix<T>(rows, out);
    for (std::size_t r = 0; r < rows; ++r) {
        T *yr = y.row(r);
        const T *xr = x.row(r);
        std::copy_n(p.bias.data.data(), out, yr);
        for (std::size_t i = 0; i < in; ++i) {
            const T xi = xr[i];
            const T *wi = p.weight.row(i);
            for (std::size_t o = 0; o < out; ++o)
                yr[o] += xi * wi[o];
        }
    }
}

// Accumulates weight/bias gradients; writes (not adds) dx for `rows` rows.
template <typename T>
void dense_backward(const Matrix<T> &x, std::size_t rows, const Matrix<T> &dy, const DenseParams<T> &p,
                    DenseParams<T> &g, Matrix<T> *dx)
{
    const std::size_t in = p.weight.rows;
    const std::size_t out = p.weight.cols;
    if (dx)
        *dx = Matrix<T>(rows, in);
    for (std::size_t r = 0; r < rows; ++r) {
        const T *dyr = dy.row(r);
        const T *xr = x.row(r);
        T *gb = g.bias.data.data();
        for (std::size_t o = 0; o < out; ++o)
            gb[o] += dyr[o];
        for (std::size_t i = 0; i < in; ++i) {
            const T xi = xr[i];
            T *gwi = g.weight.row(i);
            const T *wi = p.weight.row(i);
            T acc{};
            for (std::size_t o = 0; o < out; ++o) {
                gwi[o] += xi * dyr[o];
                acc += wi[o] * dyr[o];
            }
            if (dx)
                (*dx)(r, i) = acc;
        }
    }
}

template <typename T>
void norm_forward(const Matrix<T> &x, std::size_t rows, const NormParams<T> &p, Matrix<T> &xhat,
                  std::vector<T> &rstd, Matrix<T> &y)
{
    const std::size_t d = x.cols;
    xhat = Matrix<T>(rows, d);
    y = Matrix<T>(rows, d);
    rstd.assign(rows, T{});
    for (std::size_t r = 0; r < rows; ++r) {
        const T *xr = x.row(r);
        T mean{};
        for (std::size_t j = 0; j < d; ++j)
            mean += xr[j];
        mean /= static_cast<T>(d);
        T var{};
        for (std::size_t j = 0; j < d; ++j)
            var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<T>(d);
        const T rs = T(1) / std::sqrt(var + T(norm_eps));
        rstd[r] = rs;
        T *hr = xhat.row(r);
        T *yr = y.row(r);
        for (std::size_t j = 0; j < d; ++j) {
            hr[j] = (xr[j] - mean) * rs;
            yr[j] = p.gain.data[j] * hr[j] + p.bias.data[j];
        }
    }
}

// Adds the input gradient into dx.
template <typename T>
void norm_backward(const Matrix<T> &xhat, const std::vector<T> &rstd, std::size_t rows, const Matrix<T> &dy,
                   const NormParams<T> &p, NormParams<T> &g, Matrix<T> &dx)
{
    const std::size_t d = xhat.cols;
    std::vector<T> dxhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
        const T *hr = xhat.row(r);
        const T *dyr = dy.row(r);
        T mean_dxhat{};
        T mean_dxhat_xhat{};
        for (std::size_t j = 0; j < d; ++j) {
            g.gain.data[j] += dyr[j] * hr[j];
            g.bias.data[j] += dyr[j];
            dxhat[j] = dyr[j] * p.gain.data[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * hr[j];
        }
        mean_dxhat /= static_cast<T>(d);
        mean_dxhat_xhat /= static_cast<T>(d);
        T *dxr = dx.row(r);
        for (std::size_t j = 0; j < d; ++j)
            dxr[j] += rstd[r] * (dxhat[j] - mean_dxhat - hr[j] * mean_dxhat_xhat);
    }
}

// Inverted-dropout mask over a rows x cols block, or an empty matrix when
// dropout is inactive.
template <typename T>
Matrix<T> make_mask(std::size_t rows, std::size_t cols, std::uint64_t seed, std::uint64_t site, double p,
                    bool active)
{
    if (!active || p <= 0.0)
        return {};
    Matrix<T> mask(rows, cols);
    const T scale = static_cast<T>(1.0 / (1.0 - p));
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask.data[i] = dropout_keeps(seed, site, i, p) ? scale : T{};
    return mask;
}

template <typename T>
void apply_mask(Matrix<T> &x, const Matrix<T> &mask)
{
    if (mask.size() == 0)
        return;
    for (std::size_t i = 0; i < x.size(); ++i)
        x.data[i] *= mask.data[i];
}

} // namespace

template <typename T>
ForwardTape<T> forward_with_tape(const BasicParameters<T> &params, const EncodedPair &pair, bool train_mode,
                                 std::uint64_t dropout_seed)
{
    const ModelConfig &cfg = params.config;
    const std::size_t length = pair.ids.size();
    if (length == 0)
        throw ConfigError{"cannot run the model on an empty sequence"};
    if (length > cfg.max_positions)
        throw ConfigError{"sequence of length " + std::to_string(length) + " exceeds max_positions " +
                          std::to_string(cfg.max_positions)};
    for (TokenId id : pair.ids)
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
            throw ConfigError{"token id " + std::to_string(id) + " outside the vocabulary"};

    const std::size_t d = cfg.embed_dim;
    const std::size_t heads = cfg.num_heads;
    const std::size_t dh = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    const double p = cfg.dropout_p;

    ForwardTape<T> tape;
    tape.params_ = &params;
    tape.ids_ = pair.ids;
    tape.train_mode_ = train_mode;
    tape.dropout_seed_ = dropout_seed;

    Matrix<T> x(length, d);
    for (std::size_t t = 0; t < length; ++t) {
        const T *e = params.token_embedding.row(static_cast<std::size_t>(pair.ids[t]));
        const T *pe = params.position_embedding.row(t);
        T *xr = x.row(t);
        for (std::size_t j = 0; j < d; ++j)
            xr[j] = e[j] + pe[j];
    }
    tape.embed_mask_ = make_mask<T>(length, d, dropout_seed, dropout_site::embedding, p, train_mode);
    apply_mask(x, tape.embed_mask_);

    tape.layers_.resize(cfg.num_layers);
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const auto &lp = params.layers[l];
        auto &lt = tape.layers_[l];
        const std::size_t rows = (l + 1 == cfg.num_layers) ? 1 : length;
        lt.rows = rows;

        norm_forward(x, length, lp.attn_norm, lt.attn_xhat, lt.attn_rstd, lt.attn_in);
        dense_forward(lt.attn_in, rows, lp.query, lt.q);
        dense_forward(lt.attn_in, length, lp.key, lt.k);
        dense_forward(lt.attn_in, length, lp.value, lt.v);

        lt.probs.assign(heads * rows * length, T{});
        lt.context = Matrix<T>(rows, d);
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = h * dh;
            for (std::size_t r = 0; r < rows; ++r) {
                T *pr = lt.probs.data() + (h * rows + r) * length;
                const T *qr = lt.q.row(r) + off;
                T max_score = -std::numeric_limits<T>::infinity();
                for (std::size_t t = 0; t < length; ++t) {
                    const T *kt = lt.k.row(t) + off;
                    T s{};
                    for (std::size_t j = 0; j < dh; ++j)
                        s += qr[j] * kt[j];
                    pr[t] = s * scale;
                    max_score = std::max(max_score, pr[t]);
                }
                T total{};
                for (std::size_t t = 0; t < length; ++t) {
                    pr[t] = std::exp(pr[t] - max_score);
                    total += pr[t];
                }
                T *cr = lt.context.row(r) + off;
                for (std::size_t t = 0; t < length; ++t) {
                    pr[t] /= total;
                    const T *vt = lt.v.row(t) + off;
                    for (std::size_t j = 0; j < dh; ++j)
                        cr[j] += pr[t] * vt[j];
                }
            }
        }

        Matrix<T> attn;
        dense_forward(lt.context, rows, lp.attn_out, attn);
        lt.attn_mask = make_mask<T>(rows, d, dropout_seed, dropout_site::attention(l), p, train_mode);
        apply_mask(attn, lt.attn_mask);

        Matrix<T> mid(rows, d);
        for (std::size_t i = 0; i < mid.size(); ++i)
            mid.data[i] = x.data[i] + attn.data[i];

        norm_forward(mid, rows, lp.ff_norm, lt.ff_xhat, lt.ff_rstd, lt.ff_in);
        dense_forward(lt.ff_in, rows, lp.ff_in, lt.ff_pre);
        lt.ff_act = Matrix<T>(rows, cfg.ff_dim);
        for (std::size_t i = 0; i < lt.ff_pre.size(); ++i)
            lt.ff_act.data[i] = gelu(lt.ff_pre.data[i]);
        Matrix<T> ff;
        dense_forward(lt.ff_act, rows, lp.ff_out, ff);
        lt.ff_mask = make_mask<T>(rows, d, dropout_seed, dropout_site::feed_forward(l), p, train_mode);
        apply_mask(ff, lt.ff_mask);

        for (std::size_t i = 0; i < mid.size(); ++i)
            mid.data[i] += ff.data[i];
        x = std::move(mid);
    }

    Matrix<T> z;
    std::vector<T> rstd;
    norm_forward(x, 1, params.final_norm, tape.final_xhat_, rstd, z);
    tape.final_rstd_ = rstd[0];

    const std::size_t n_head = params.head.size();
    tape.head_inputs_.resize(n_head);
    tape.head_pre_act_.resize(n_head);
    tape.head_masks_.resize(n_head);
    Matrix<T> c = std::move(z);
    for (std::size_t i = 0; i < n_head; ++i) {
        tape.head_masks_[i] = make_mask<T>(1, c.cols, dropout_seed, dropout_site::head_input(i), p, train_mode);
        apply_mask(c, tape.head_masks_[i]);
        tape.head_inputs_[i] = c;
        dense_forward(c, 1, params.head[i], tape.head_pre_act_[i]);
        c = tape.head_pre_act_[i];
        if (i + 1 < n_head && cfg.head_activation)
            for (auto &v : c.data)
                v = gelu(v);
    }
    for (std::size_t o = 0; o < output_dim; ++o)
        tape.prediction_[o] = static_cast<double>(c.data[o]);
    return tape;
}

template <typename T>
void accumulate_gradients(const BasicParameters<T> &params, const ForwardTape<T> &tape,
                          std::span<const double, output_dim> loss_gradient, BasicParameters<T> &grads)
{
    if (tape.params_ != &params)
        throw std::logic_error{"forward tape was recorded with a different parameter object"};
    if (!(grads.config == params.config))
        throw std::logic_error{"gradient buffer shape does not match the parameters"};

    const ModelConfig &cfg = params.config;
    const std::size_t length = tape.ids_.size();
    const std::size_t d = cfg.embed_dim;
    const std::size_t heads = cfg.num_heads;
    const std::size_t dh = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    // Head, last dense layer first.
    const std::size_t n_head = params.head.size();
    Matrix<T> dy(1, output_dim);
    for (std::size_t o = 0; o < output_dim; ++o)
        dy.data[o] = static_cast<T>(loss_gradient[o]);
    Matrix<T> dc;
    for (std::size_t i = n_head; i-- > 0;) {
        dense_backward(tape.head_inputs_[i], 1, dy, params.head[i], grads.head[i], &dc);
        apply_mask(dc, tape.head_masks_[i]);
        if (i > 0) {
            dy = std::move(dc);
            if (cfg.head_activation) {
                const auto &pre = tape.head_pre_act_[i - 1];
                for (std::size_t j = 0; j < dy.size(); ++j)
                    dy.data[j] *= gelu_grad(pre.data[j]);
            }
        }
    }

    Matrix<T> dx(1, d);
    norm_backward(tape.final_xhat_, std::vector<T>{tape.final_rstd_}, 1, dc, params.final_norm, grads.final_norm,
                  dx);

    for (std::size_t l = cfg.num_layers; l-- > 0;) {
        const auto &lp = params.layers[l];
        auto &lg = grads.layers[l];
        const auto &lt = tape.layers_[l];
        const std::size_t rows = lt.rows;

        // Feed-forward block; dx is the gradient w.r.t. the block output.
        Matrix<T> dff = dx;
        apply_mask(dff, lt.ff_mask);
        Matrix<T> dact;
        dense_backward(lt.ff_act, rows, dff, lp.ff_out, lg.ff_out, &dact);
        for (std::size_t i = 0; i < dact.size(); ++i)
            dact.data[i] *= gelu_grad(lt.ff_pre.data[i]);
        Matrix<T> dnorm_in;
        dense_backward(lt.ff_in, rows, dact, lp.ff_in, lg.ff_in, &dnorm_in);
        Matrix<T> dmid = dx;
        norm_backward(lt.ff_xhat, lt.ff_rstd, rows, dnorm_in, lp.ff_norm, lg.ff_norm, dmid);

        // Attention block.
        Matrix<T> dattn = dmid;
        apply_mask(dattn, lt.attn_mask);
        Matrix<T> dcontext;
        dense_backward(lt.context, rows, dattn, lp.attn_out, lg.attn_out, &dcontext);

        Matrix<T> dq(rows, d);
        Matrix<T> dk(length, d);
        Matrix<T> dv(length, d);
        std::vector<T> dp(length);
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = h * dh;
            for (std::size_t r = 0; r < rows; ++r) {
                const T *pr = lt.probs.data() + (h * rows + r) * length;
                const T *dcr = dcontext.row(r) + off;
                T weighted{};
                for (std::size_t t = 0; t < length; ++t) {
                    const T *vt = lt.v.row(t) + off;
                    T *dvt = dv.row(t) + off;
                    T s{};
                    for (std::size_t j = 0; j < dh; ++j) {
                        s += dcr[j] * vt[j];
                        dvt[j] += pr[t] * dcr[j];
                    }
                    dp[t] = s;
                    weighted += pr[t] * s;
                }
                const T *qr = lt.q.row(r) + off;
                T *dqr = dq.row(r) + off;
                for (std::size_t t = 0; t < length; ++t) {
                    const T ds = pr[t] * (dp[t] - weighted) * scale;
                    const T *kt = lt.k.row(t) + off;
                    T *dkt = dk.row(t) + off;
                    for (std::size_t j = 0; j < dh; ++j) {
                        dqr[j] += ds * kt[j];
                        dkt[j] += ds * qr[j];
                    }
                }
            }
        }

        Matrix<T> dnorm(length, d);
        Matrix<T> part;
        dense_backward(lt.attn_in, rows, dq, lp.query, lg.query, &part);
        for (std::size_t i = 0; i < part.size(); ++i)
            dnorm.data[i] += part.data[i];
        dense_backward(lt.attn_in, length, dk, lp.key, lg.key, &part);
        for (std::size_t i = 0; i < part.size(); ++i)
            dnorm.data[i] += part.data[i];
        dense_backward(lt.attn_in, length, dv, lp.value, lg.value, &part);
        for (std::size_t i = 0; i < part.size(); ++i)
            dnorm.data[i] += part.data[i];

        Matrix<T> dxin(length, d);
        for (std::size_t i = 0; i < dmid.size(); ++i)
            dxin.data[i] = dmid.data[i];
        norm_backward(lt.attn_xhat, lt.attn_rstd, length, dnorm, lp.attn_norm, lg.attn_norm, dxin);
        dx = std::move(dxin);
    }

    apply_mask(dx, tape.embed_mask_);
    for (std::size_t t = 0; t < length; ++t) {
        T *ge = grads.token_embedding.row(static_cast<std::size_t>(tape.ids_[t]));
        T *gp = grads.position_embedding.row(t);
        const T *dxr = dx.row(t);
        for (std::size_t j = 0; j < d; ++j) {
            ge[j] += dxr[j];
            gp[j] += dxr[j];
        }
    }
}

#define NEWSIM_INSTANTIATE_MODEL(T)                                                                               \
    template struct LayerTape<T>;                                                                                 \
    template class ForwardTape<T>;                                                                                \
    template std::vector<Matrix<T> *> tensors(BasicParameters<T> &);                                              \
    template std::vector<const Matrix<T> *> tensors(const BasicParameters<T> &);                                  \
    template BasicParameters<T> zero_parameters<T>(const ModelConfig &);                                          \
    template ForwardTape<T> forward_with_tape(const BasicParameters<T> &, const EncodedPair &, bool, std::uint64_t); \
    template void accumulate_gradients(const BasicParameters<T> &, const ForwardTape<T> &,                        \
                                       std::span<const double, output_dim>, BasicParameters<T> &);

NEWSIM_INSTANTIATE_MODEL(float)
NEWSIM_INSTANTIATE_MODEL(double)

#undef NEWSIM_INSTANTIATE_MODEL

template BasicParameters<double> convert_parameters<double, float>(const BasicParameters<float> &);
template BasicParameters<float> convert_parameters<float, double>(const BasicParameters<double> &);
template BasicParameters<float> convert_parameters<float, float>(const BasicParameters<float> &);
template BasicParameters<double> convert_parameters<double, double>(const BasicParameters<double> &);

} // namespace newsim
