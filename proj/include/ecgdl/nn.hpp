#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "ecgdl/errors.hpp"
#include "ecgdl/labels.hpp"
#include "ecgdl/tensor.hpp"

namespace ecgdl::nn {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ModelConfig {
    std::size_t in_channels = 12; // 1, 3, 6 or 12
    std::size_t input_length = 1000;
    std::vector<std::size_t> conv_filters{16, 16, 32, 32, 64, 64};
    std::vector<std::size_t> conv_kernels{7, 7, 5, 5, 3, 3};
    double leaky_alpha = 0.3;
    std::size_t dense_hidden = 32;
    static constexpr std::size_t pool_size = 2;
    static constexpr std::size_t n_blocks = 6;

    void validate() const {
        if (in_channels != 1 && in_channels != 3 && in_channels != 6 && in_channels != 12)
            throw ShapeError("in_channels must be one of {1,3,6,12}");
        if (conv_filters.size() != n_blocks || conv_kernels.size() != n_blocks)
            throw ShapeError("exactly 6 convolutional blocks are required");
        if (input_length < (std::size_t{1} << n_blocks))
            throw ShapeError("input_length must be at least 2^6");
        for (auto k : conv_kernels)
            if (k % 2 == 0) throw ShapeError("conv kernels must be odd (same padding)");
    }

    // sequence lengths after each pooling stage
    std::vector<std::size_t> block_lengths() const {
        std::vector<std::size_t> lens;
        std::size_t len = input_length;
        for (std::size_t i = 0; i < n_blocks; ++i) {
            len /= pool_size;
            lens.push_back(len);
        }
        return lens;
    }

    std::size_t flatten_width() const { return block_lengths().back() * conv_filters.back(); }
};

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-7;
    double bn_momentum = 0.99;
    double bn_eps = 1e-3;
    std::uint64_t shuffle_seed = 0;
    labels::ClassWeights class_weights;
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct ConvBlockParams {
    Tensor weight;              // [out_ch][in_ch][kernel]
    std::vector<double> bias;   // [out_ch]
    std::vector<double> gamma, beta;
    std::vector<double> moving_mean, moving_var;
};

struct DenseParams {
    Tensor weight; // [in][out]
    std::vector<double> bias;
};

struct ModelParams {
    std::vector<ConvBlockParams> blocks;
    DenseParams fc1, fc2;
};

struct NamedTensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double>* data;
};

// Canonical tensor order; moving statistics are carried but not trained.
inline std::vector<NamedTensor> all_tensors(ModelParams& p, bool trainable_only = false) {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        auto& b = p.blocks[i];
        const std::string pre = "block" + std::to_string(i) + ".";
        out.push_back({pre + "conv.weight", b.weight.shape(), &b.weight.vec()});
        out.push_back({pre + "conv.bias", {b.bias.size()}, &b.bias});
        out.push_back({pre + "bn.gamma", {b.gamma.size()}, &b.gamma});
        out.push_back({pre + "bn.beta", {b.beta.size()}, &b.beta});
        if (!trainable_only) {
            out.push_back({pre + "bn.moving_mean", {b.moving_mean.size()}, &b.moving_mean});
            out.push_back({pre + "bn.moving_var", {b.moving_var.size()}, &b.moving_var});
        }
    }
    out.push_back({"fc1.weight", p.fc1.weight.shape(), &p.fc1.weight.vec()});
    out.push_back({"fc1.bias", {p.fc1.bias.size()}, &p.fc1.bias});
    out.push_back({"fc2.weight", p.fc2.weight.shape(), &p.fc2.weight.vec()});
    out.push_back({"fc2.bias", {p.fc2.bias.size()}, &p.fc2.bias});
    return out;
}

inline std::size_t trainable_count(ModelParams& p) {
    std::size_t n = 0;
    for (auto& t : all_tensors(p, true)) n += t.data->size();
    return n;
}

// Zero-valued parameter set with the architecture's shapes (also the gradient
// container).
inline ModelParams make_params(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    std::size_t in_ch = cfg.in_channels;
    for (std::size_t i = 0; i < ModelConfig::n_blocks; ++i) {
        ConvBlockParams b;
        const std::size_t out_ch = cfg.conv_filters[i];
        b.weight = Tensor({out_ch, in_ch, cfg.conv_kernels[i]});
        b.bias.assign(out_ch, 0.0);
        b.gamma.assign(out_ch, 1.0);
        b.beta.assign(out_ch, 0.0);
        b.moving_mean.assign(out_ch, 0.0);
        b.moving_var.assign(out_ch, 1.0);
        p.blocks.push_back(std::move(b));
        in_ch = out_ch;
    }
    p.fc1.weight = Tensor({cfg.flatten_width(), cfg.dense_hidden});
    p.fc1.bias.assign(cfg.dense_hidden, 0.0);
    p.fc2.weight = Tensor({cfg.dense_hidden, 1});
    p.fc2.bias.assign(1, 0.0);
    return p;
}

inline ModelParams make_gradients(const ModelConfig& cfg) {
    ModelParams g = make_params(cfg);
    for (auto& t : all_tensors(g))
        std::fill(t.data->begin(), t.data->end(), 0.0);
    return g;
}

// He-style truncated normal init (resampled beyond two sigma), seeded.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p = make_params(cfg);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    const auto trunc = [&] {
        double z = nd(rng);
        while (std::abs(z) > 2.0) z = nd(rng);
        return z;
    };
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        auto& b = p.blocks[i];
        const std::size_t fan_in = b.weight.dim(1) * b.weight.dim(2);
        const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (auto& w : b.weight.vec()) w = std_dev * trunc();
    }
    for (DenseParams* d : {&p.fc1, &p.fc2}) {
        const double std_dev = std::sqrt(2.0 / static_cast<double>(d->weight.dim(0)));
        for (auto& w : d->weight.vec()) w = std_dev * trunc();
    }
    return p;
}

// ---------------------------------------------------------------------------
// Layers (forward / backward)
// ---------------------------------------------------------------------------

enum class Mode { Train, Eval };

// Cross-correlation, zero "same" padding, stride 1.
inline Tensor conv1d_forward(const Tensor& x, const Tensor& w, const std::vector<double>& b) {
    if (x.shape().size() != 3 || w.shape().size() != 3)
        throw ShapeError("conv1d: expected 3-d input and weight");
    const std::size_t batch = x.dim(0), in_ch = x.dim(1), len = x.dim(2);
    const std::size_t out_ch = w.dim(0), kernel = w.dim(2);
    if (w.dim(1) != in_ch) throw ShapeError("conv1d: channel mismatch");
    if (b.size() != out_ch) throw ShapeError("conv1d: bias size mismatch");
    if (kernel % 2 == 0) throw ShapeError("conv1d: kernel must be odd");
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kernel) / 2;

    Tensor y({batch, out_ch, len});
    for (std::size_t bi = 0; bi < batch; ++bi) {
        for (std::size_t o = 0; o < out_ch; ++o) {
            double* yrow = &y.at3(bi, o, 0);
            for (std::size_t t = 0; t < len; ++t) yrow[t] = b[o];
            for (std::size_t c = 0; c < in_ch; ++c) {
                const double* xrow = x.data() + (bi * in_ch + c) * len;
                for (std::size_t j = 0; j < kernel; ++j) {
                    const double wv = w[(o * in_ch + c) * kernel + j];
                    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
                    const std::size_t t0 =
                        static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -shift));
                    const std::size_t t1 = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
                        static_cast<std::ptrdiff_t>(len), static_cast<std::ptrdiff_t>(len) - shift));
                    for (std::size_t t = t0; t < t1; ++t)
                        yrow[t] += wv * xrow[static_cast<std::size_t>(
                                       static_cast<std::ptrdiff_t>(t) + shift)];
                }
            }
        }
    }
    return y;
}

inline void conv1d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dx,
                            Tensor& dw, std::vector<double>& db) {
    const std::size_t batch = x.dim(0), in_ch = x.dim(1), len = x.dim(2);
    const std::size_t out_ch = w.dim(0), kernel = w.dim(2);
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kernel) / 2;
    dx = Tensor({batch, in_ch, len});
    dw = Tensor(w.shape());
    db.assign(out_ch, 0.0);

    for (std::size_t bi = 0; bi < batch; ++bi) {
        for (std::size_t o = 0; o < out_ch; ++o) {
            const double* dyrow = dy.data() + (bi * out_ch + o) * len;
            for (std::size_t t = 0; t < len; ++t) db[o] += dyrow[t];
            for (std::size_t c = 0; c < in_ch; ++c) {
                const double* xrow = x.data() + (bi * in_ch + c) * len;
                double* dxrow = &dx.at3(bi, c, 0);
                for (std::size_t j = 0; j < kernel; ++j) {
                    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
                    const std::size_t t0 =
                        static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -shift));
                    const std::size_t t1 = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
                        static_cast<std::ptrdiff_t>(len), static_cast<std::ptrdiff_t>(len) - shift));
                    const double wv = w[(o * in_ch + c) * kernel + j];
                    double acc = 0.0;
                    for (std::size_t t = t0; t < t1; ++t) {
                        const std::size_t xi =
                            static_cast<std::size_t>(static_cast<std::ptrdiff_t>(t) + shift);
                        acc += dyrow[t] * xrow[xi];
                        dxrow[xi] += dyrow[t] * wv;
                    }
                    dw[(o * in_ch + c) * kernel + j] += acc;
                }
            }
        }
    }
}

struct BatchNormCache {
    Tensor xhat;
    std::vector<double> mean, var; // batch statistics (train mode)
};

// Per-channel normalization over (batch, length); biased variance; moving
// statistics updated with the configured momentum in train mode.
inline Tensor batchnorm_forward(const Tensor& x, ConvBlockParams& p, Mode mode, double eps,
                                double momentum, BatchNormCache* cache = nullptr) {
    const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    if (mode == Mode::Train && batch < 2)
        throw BatchTooSmall("batch normalization needs batch >= 2 in train mode");

    Tensor y(x.shape());
    const double m = static_cast<double>(batch * len);
    std::vector<double> mean(ch, 0.0), var(ch, 0.0);

    if (mode == Mode::Train) {
        for (std::size_t c = 0; c < ch; ++c) {
            double s = 0.0;
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t t = 0; t < len; ++t) s += x.at3(b, c, t);
            mean[c] = s / m;
            double v = 0.0;
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t t = 0; t < len; ++t) {
                    const double d = x.at3(b, c, t) - mean[c];
                    v += d * d;
                }
            var[c] = v / m;
            p.moving_mean[c] = momentum * p.moving_mean[c] + (1.0 - momentum) * mean[c];
            p.moving_var[c] = momentum * p.moving_var[c] + (1.0 - momentum) * var[c];
        }
    } else {
        mean = p.moving_mean;
        var = p.moving_var;
    }

    Tensor xhat(x.shape());
    for (std::size_t c = 0; c < ch; ++c) {
        const double inv_std = 1.0 / std::sqrt(var[c] + eps);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t t = 0; t < len; ++t) {
                const double h = (x.at3(b, c, t) - mean[c]) * inv_std;
                xhat.at3(b, c, t) = h;
                y.at3(b, c, t) = p.gamma[c] * h + p.beta[c];
            }
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->mean = std::move(mean);
        cache->var = std::move(var);
    }
    return y;
}

inline Tensor batchnorm_backward(const Tensor& dy, const ConvBlockParams& p,
                                 const BatchNormCache& cache, double eps,
                                 std::vector<double>& dgamma, std::vector<double>& dbeta) {
    const std::size_t batch = dy.dim(0), ch = dy.dim(1), len = dy.dim(2);
    const double m = static_cast<double>(batch * len);
    dgamma.assign(ch, 0.0);
    dbeta.assign(ch, 0.0);
    Tensor dx(dy.shape());
    for (std::size_t c = 0; c < ch; ++c) {
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t t = 0; t < len; ++t) {
                const double g = dy.at3(b, c, t);
                const double h = cache.xhat.at3(b, c, t);
                dgamma[c] += g * h;
                dbeta[c] += g;
                const double dxhat = g * p.gamma[c];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * h;
            }
        const double inv_std = 1.0 / std::sqrt(cache.var[c] + eps);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t t = 0; t < len; ++t) {
                const double dxhat = dy.at3(b, c, t) * p.gamma[c];
                dx.at3(b, c, t) = inv_std / m *
                                  (m * dxhat - sum_dxhat -
                                   cache.xhat.at3(b, c, t) * sum_dxhat_xhat);
            }
    }
    return dx;
}

inline Tensor leaky_relu(const Tensor& x, double alpha) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
        y[i] = x[i] >= 0.0 ? x[i] : alpha * x[i];
    return y;
}

inline Tensor leaky_relu_backward(const Tensor& dy, const Tensor& x, double alpha) {
    Tensor dx(dy.shape());
    for (std::size_t i = 0; i < dy.numel(); ++i)
        dx[i] = dy[i] * (x[i] >= 0.0 ? 1.0 : alpha);
    return dx;
}

// Non-overlapping windows of two, remainder dropped; first index wins ties.
inline Tensor maxpool1d_forward(const Tensor& x, std::vector<std::uint32_t>& argmax) {
    const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    if (len < 2) throw ShapeError("maxpool: length must be >= 2");
    const std::size_t out_len = len / 2;
    Tensor y({batch, ch, out_len});
    argmax.assign(batch * ch * out_len, 0);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t t = 0; t < out_len; ++t) {
                const double a = x.at3(b, c, 2 * t);
                const double bb = x.at3(b, c, 2 * t + 1);
                const std::size_t win = a >= bb ? 0 : 1;
                y.at3(b, c, t) = win == 0 ? a : bb;
                argmax[(b * ch + c) * out_len + t] = static_cast<std::uint32_t>(2 * t + win);
            }
    return y;
}

inline Tensor maxpool1d_backward(const Tensor& dy, const std::vector<std::uint32_t>& argmax,
                                 std::size_t input_len) {
    const std::size_t batch = dy.dim(0), ch = dy.dim(1), out_len = dy.dim(2);
    Tensor dx({batch, ch, input_len});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t t = 0; t < out_len; ++t)
                dx.at3(b, c, argmax[(b * ch + c) * out_len + t]) += dy.at3(b, c, t);
    return dx;
}

// y = x W + b
inline Tensor dense_forward(const Tensor& x, const Tensor& w, const std::vector<double>& b) {
    if (x.shape().size() != 2 || w.shape().size() != 2 || x.dim(1) != w.dim(0) ||
        b.size() != w.dim(1))
        throw ShapeError("dense: shape mismatch");
    const std::size_t batch = x.dim(0), n = x.dim(1), m = w.dim(1);
    Tensor y({batch, m});
    for (std::size_t bi = 0; bi < batch; ++bi)
        for (std::size_t j = 0; j < m; ++j) {
            double acc = b[j];
            for (std::size_t i = 0; i < n; ++i) acc += x.at2(bi, i) * w.at2(i, j);
            y.at2(bi, j) = acc;
        }
    return y;
}

inline void dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dx,
                           Tensor& dw, std::vector<double>& db) {
    const std::size_t batch = x.dim(0), n = x.dim(1), m = w.dim(1);
    dx = Tensor({batch, n});
    dw = Tensor(w.shape());
    db.assign(m, 0.0);
    for (std::size_t bi = 0; bi < batch; ++bi)
        for (std::size_t j = 0; j < m; ++j) {
            const double g = dy.at2(bi, j);
            db[j] += g;
            for (std::size_t i = 0; i < n; ++i) {
                dw.at2(i, j) += x.at2(bi, i) * g;
                dx.at2(bi, i) += w.at2(i, j) * g;
            }
        }
}

inline double sigmoid(double z) {
    double p;
    if (z >= 0.0) {
        p = 1.0 / (1.0 + std::exp(-z));
    } else {
        const double e = std::exp(z);
        p = e / (1.0 + e);
    }
    // stay strictly inside (0,1) even for saturating inputs
    return std::clamp(p, std::numeric_limits<double>::min(),
                      1.0 - std::numeric_limits<double>::epsilon() / 2);
}

inline constexpr double kProbClamp = 1e-7;

// mean over batch of -w_y * (y log p + (1-y) log(1-p))
inline double weighted_bce(const std::vector<double>& p, const std::vector<int>& y,
                           const labels::ClassWeights& w) {
    if (p.size() != y.size()) throw ShapeError("bce: length mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pc = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
        const double nll = y[i] == 1 ? -std::log(pc) : -std::log(1.0 - pc);
        loss += w.of(y[i]) * nll;
    }
    return loss / static_cast<double>(p.size());
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

struct ForwardCache {
    bool valid = false;
    Tensor input;
    struct Block {
        Tensor conv_in;
        Tensor conv_out;
        BatchNormCache bn;
        Tensor bn_out;  // pre-activation
        Tensor act_out;
        std::vector<std::uint32_t> pool_argmax;
    };
    std::vector<Block> blocks;
    Tensor flat;
    Tensor fc1_out; // pre-activation
    Tensor fc1_act;
    std::vector<double> logits;
    std::vector<double> probs;
};

// 6 x (conv -> batchnorm -> leaky relu -> maxpool) -> flatten
//   -> dense -> leaky relu -> dense(1) -> sigmoid
inline std::vector<double> model_forward(const ModelConfig& cfg, ModelParams& params,
                                         const Tensor& x, Mode mode, const TrainConfig& tc,
                                         ForwardCache* cache = nullptr) {
    cfg.validate();
    if (x.shape().size() != 3 || x.dim(1) != cfg.in_channels || x.dim(2) != cfg.input_length)
        throw ShapeError("model input does not match configuration");
    const std::size_t batch = x.dim(0);

    if (cache) {
        *cache = ForwardCache{};
        cache->input = x;
        cache->blocks.resize(ModelConfig::n_blocks);
    }

    Tensor cur = x;
    for (std::size_t i = 0; i < ModelConfig::n_blocks; ++i) {
        auto& bp = params.blocks[i];
        Tensor conv = conv1d_forward(cur, bp.weight, bp.bias);
        BatchNormCache bn_cache;
        Tensor bn = batchnorm_forward(conv, bp, mode, tc.bn_eps, tc.bn_momentum,
                                      cache ? &bn_cache : nullptr);
        Tensor act = leaky_relu(bn, cfg.leaky_alpha);
        std::vector<std::uint32_t> argmax;
        Tensor pooled = maxpool1d_forward(act, argmax);
        if (cache) {
            auto& cb = cache->blocks[i];
            cb.conv_in = cur;
            cb.conv_out = std::move(conv);
            cb.bn = std::move(bn_cache);
            cb.bn_out = std::move(bn);
            cb.act_out = std::move(act);
            cb.pool_argmax = std::move(argmax);
        }
        cur = std::move(pooled);
    }

    // flatten [batch][ch][len] -> [batch][ch*len]
    Tensor flat({batch, cur.dim(1) * cur.dim(2)}, cur.vec());
    Tensor fc1 = dense_forward(flat, params.fc1.weight, params.fc1.bias);
    Tensor fc1_act = leaky_relu(fc1, cfg.leaky_alpha);
    Tensor fc2 = dense_forward(fc1_act, params.fc2.weight, params.fc2.bias);

    std::vector<double> probs(batch);
    std::vector<double> logits(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        logits[b] = fc2.at2(b, 0);
        probs[b] = sigmoid(logits[b]);
    }
    if (cache) {
        cache->flat = std::move(flat);
        cache->fc1_out = std::move(fc1);
        cache->fc1_act = std::move(fc1_act);
        cache->logits = logits;
        cache->probs = probs;
        cache->valid = true;
    }
    return probs;
}

// Exact reverse-mode gradients of weighted_bce o model_forward.
inline ModelParams model_backward(const ModelConfig& cfg, const ModelParams& params,
                                  const ForwardCache& cache, const std::vector<int>& y,
                                  const labels::ClassWeights& weights, const TrainConfig& tc) {
    if (!cache.valid) throw StateError("model_backward requires a cached forward pass");
    const std::size_t batch = cache.input.dim(0);
    if (y.size() != batch) throw ShapeError("label count does not match batch");

    ModelParams grads = make_gradients(cfg);

    // dL/dlogit = w_y * (p - y) / batch
    Tensor dlogits({batch, 1});
    for (std::size_t b = 0; b < batch; ++b)
        dlogits.at2(b, 0) =
            weights.of(y[b]) * (cache.probs[b] - static_cast<double>(y[b])) /
            static_cast<double>(batch);

    Tensor d_fc1_act;
    dense_backward(cache.fc1_act, params.fc2.weight, dlogits, d_fc1_act, grads.fc2.weight,
                   grads.fc2.bias);
    Tensor d_fc1 = leaky_relu_backward(d_fc1_act, cache.fc1_out, cfg.leaky_alpha);
    Tensor d_flat;
    dense_backward(cache.flat, params.fc1.weight, d_fc1, d_flat, grads.fc1.weight,
                   grads.fc1.bias);

    const auto lens = cfg.block_lengths();
    Tensor d_cur({batch, cfg.conv_filters.back(), lens.back()}, d_flat.vec());

    for (std::size_t i = ModelConfig::n_blocks; i-- > 0;) {
        const auto& cb = cache.blocks[i];
        Tensor d_act = maxpool1d_backward(d_cur, cb.pool_argmax, cb.act_out.dim(2));
        Tensor d_bn = leaky_relu_backward(d_act, cb.bn_out, cfg.leaky_alpha);
        Tensor d_conv = batchnorm_backward(d_bn, params.blocks[i], cb.bn, tc.bn_eps,
                                           grads.blocks[i].gamma, grads.blocks[i].beta);
        Tensor d_in;
        conv1d_backward(cb.conv_in, params.blocks[i].weight, d_conv, d_in,
                        grads.blocks[i].weight, grads.blocks[i].bias);
        d_cur = std::move(d_in);
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<std::vector<double>> m, v; // one entry per trainable tensor
    std::uint64_t t = 0;
};

inline AdamState make_adam_state(ModelParams& params) {
    AdamState s;
    for (auto& tns : all_tensors(params, true)) {
        s.m.emplace_back(tns.data->size(), 0.0);
        s.v.emplace_back(tns.data->size(), 0.0);
    }
    return s;
}

inline void adam_step(ModelParams& params, ModelParams& grads, AdamState& state,
                      const TrainConfig& tc) {
    auto pt = all_tensors(params, true);
    auto gt = all_tensors(grads, true);
    if (pt.size() != gt.size() || pt.size() != state.m.size())
        throw ShapeError("adam state does not match parameters");
    ++state.t;
    const double b1t = 1.0 - std::pow(tc.adam_beta1, static_cast<double>(state.t));
    const double b2t = 1.0 - std::pow(tc.adam_beta2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < pt.size(); ++k) {
        auto& p = *pt[k].data;
        auto& g = *gt[k].data;
        if (p.size() != g.size()) throw ShapeError("gradient shape mismatch: " + pt[k].name);
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = tc.adam_beta1 * m[i] + (1.0 - tc.adam_beta1) * g[i];
            v[i] = tc.adam_beta2 * v[i] + (1.0 - tc.adam_beta2) * g[i] * g[i];
            const double mhat = m[i] / b1t;
            const double vhat = v[i] / b2t;
            p[i] -= tc.learning_rate * mhat / (std::sqrt(vhat) + tc.adam_eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0; // percent
};

struct Dataset {
    Tensor x; // [n][channels][length]
    std::vector<int> y;

    std::size_t size() const { return y.size(); }
};

inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
    const std::size_t row = x.dim(1) * x.dim(2);
    Tensor out({idx.size(), x.dim(1), x.dim(2)});
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(x.data() + idx[i] * row, x.data() + (idx[i] + 1) * row, out.data() + i * row);
    return out;
}

struct TrainResult {
    ModelParams params;
    AdamState adam;
    std::vector<EpochStats> history;
};

inline std::vector<double> predict(const ModelConfig& cfg, ModelParams& params, const Tensor& x,
                                   const TrainConfig& tc = {}) {
    return model_forward(cfg, params, x, Mode::Eval, tc);
}

// Per-epoch seeded reshuffle, mini-batches, forward/backward/Adam; batch norm
// runs in train mode while fitting and eval mode for validation.
inline TrainResult train_model(const Dataset& train, const Dataset& val, const ModelConfig& cfg,
                               const TrainConfig& tc,
                               const std::function<void(const EpochStats&)>& on_epoch = {}) {
    cfg.validate();
    if (train.size() == 0) throw DegenerateDistribution("empty training set");
    {
        bool has0 = false, has1 = false;
        for (int v : train.y) (v == 0 ? has0 : has1) = true;
        if (!has0 || !has1)
            throw DegenerateDistribution("training set must contain both classes");
    }

    TrainResult res;
    res.params = init_params(cfg, tc.shuffle_seed);
    res.adam = make_adam_state(res.params);
    std::mt19937_64 shuffle_rng(tc.shuffle_seed ^ 0x9e3779b97f4a7c15ull);

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        std::size_t n_batches = 0;
        std::size_t pos = 0;
        while (pos < order.size()) {
            std::size_t take = std::min(tc.batch_size, order.size() - pos);
            // a trailing singleton cannot be batch-normalized; absorb it
            if (order.size() - pos - take == 1) ++take;
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                         order.begin() + static_cast<std::ptrdiff_t>(pos + take));
            pos += take;

            Tensor xb = gather_rows(train.x, idx);
            std::vector<int> yb(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = train.y[idx[i]];

            ForwardCache cache;
            auto probs = model_forward(cfg, res.params, xb, Mode::Train, tc, &cache);
            loss_sum += weighted_bce(probs, yb, tc.class_weights);
            ++n_batches;
            ModelParams grads = model_backward(cfg, res.params, cache, yb, tc.class_weights, tc);
            adam_step(res.params, grads, res.adam, tc);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(1, n_batches));
        if (val.size() > 0) {
            auto probs = predict(cfg, res.params, val.x, tc);
            stats.val_loss = weighted_bce(probs, val.y, tc.class_weights);
            std::size_t correct = 0;
            for (std::size_t i = 0; i < probs.size(); ++i)
                if ((probs[i] >= 0.5 ? 1 : 0) == val.y[i]) ++correct;
            stats.val_accuracy = 100.0 * static_cast<double>(correct) /
                                 static_cast<double>(probs.size());
        }
        res.history.push_back(stats);
        if (on_epoch) on_epoch(stats);
    }
    return res;
}

} // namespace ecgdl::nn
