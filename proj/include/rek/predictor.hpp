#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rek/error.hpp"
#include "rek/io.hpp"
#include "rek/rng.hpp"

namespace rek::nn {

/// Dense channels x height x width tensor, channel-major.
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

    std::size_t index(int c, int i, int j) const {
        return (static_cast<std::size_t>(c) * height + i) * width + j;
    }
    double& at(int c, int i, int j) { return data[index(c, i, j)]; }
    double at(int c, int i, int j) const { return data[index(c, i, j)]; }
    std::size_t size() const { return data.size(); }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

/// Zero-padded ("same") 2-D cross-correlation. `kernels` is laid out
/// [out][in][k][k]; `bias` is either empty or one value per output channel.
inline Tensor conv2d_forward(const Tensor& in, std::span<const double> kernels, std::span<const double> bias,
                             int out_channels, int k) {
    if (k < 1 || k % 2 == 0) throw ValidationError("convolution kernel size must be odd");
    const std::size_t expected = static_cast<std::size_t>(out_channels) * in.channels * k * k;
    if (kernels.size() != expected) throw ValidationError("convolution kernel shape mismatch");
    if (!bias.empty() && bias.size() != static_cast<std::size_t>(out_channels)) {
        throw ValidationError("convolution bias shape mismatch");
    }
    const int pad = k / 2;
    Tensor out(out_channels, in.height, in.width);
    for (int o = 0; o < out_channels; ++o) {
        const double b = bias.empty() ? 0.0 : bias[o];
        for (int i = 0; i < in.height; ++i) {
            for (int j = 0; j < in.width; ++j) out.at(o, i, j) = b;
        }
        for (int c = 0; c < in.channels; ++c) {
            const double* kern = kernels.data() + (static_cast<std::size_t>(o) * in.channels + c) * k * k;
            for (int di = 0; di < k; ++di) {
                const int i_lo = std::max(0, pad - di);
                const int i_hi = std::min(in.height, in.height + pad - di);
                for (int dj = 0; dj < k; ++dj) {
                    const double w = kern[di * k + dj];
                    const int j_lo = std::max(0, pad - dj);
                    const int j_hi = std::min(in.width, in.width + pad - dj);
                    for (int i = i_lo; i < i_hi; ++i) {
                        for (int j = j_lo; j < j_hi; ++j) {
                            out.at(o, i, j) += w * in.at(c, i + di - pad, j + dj - pad);
                        }
                    }
                }
            }
        }
    }
    return out;
}

/// Accumulates kernel/bias gradients and (optionally) writes the input gradient.
inline void conv2d_backward(const Tensor& in, std::span<const double> kernels, int out_channels, int k,
                            const Tensor& grad_out, Tensor* grad_in, std::span<double> grad_kernels,
                            std::span<double> grad_bias) {
    const int pad = k / 2;
    if (grad_in) *grad_in = Tensor(in.channels, in.height, in.width);
    for (int o = 0; o < out_channels; ++o) {
        double gb = 0.0;
        for (int i = 0; i < in.height; ++i) {
            for (int j = 0; j < in.width; ++j) gb += grad_out.at(o, i, j);
        }
        grad_bias[o] += gb;
        for (int c = 0; c < in.channels; ++c) {
            const std::size_t base = (static_cast<std::size_t>(o) * in.channels + c) * k * k;
            for (int di = 0; di < k; ++di) {
                const int i_lo = std::max(0, pad - di);
                const int i_hi = std::min(in.height, in.height + pad - di);
                for (int dj = 0; dj < k; ++dj) {
                    const double w = kernels[base + di * k + dj];
                    const int j_lo = std::max(0, pad - dj);
                    const int j_hi = std::min(in.width, in.width + pad - dj);
                    double gw = 0.0;
                    for (int i = i_lo; i < i_hi; ++i) {
                        for (int j = j_lo; j < j_hi; ++j) {
                            const double g = grad_out.at(o, i, j);
                            gw += g * in.at(c, i + di - pad, j + dj - pad);
                            if (grad_in) grad_in->at(c, i + di - pad, j + dj - pad) += g * w;
                        }
                    }
                    grad_kernels[base + di * k + dj] += gw;
                }
            }
        }
    }
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline Tensor relu(Tensor t) {
    for (auto& v : t.data) v = relu(v);
    return t;
}

/// y = W x + b with W laid out row-major [outputs][inputs]. Identity activation.
inline std::vector<double> fc_forward(std::span<const double> x, std::span<const double> weights,
                                      std::span<const double> bias) {
    const std::size_t outputs = bias.size();
    if (weights.size() != outputs * x.size()) throw ValidationError("fully connected shape mismatch");
    std::vector<double> y(outputs);
    for (std::size_t o = 0; o < outputs; ++o) {
        const double* row = weights.data() + o * x.size();
        double acc = bias[o];
        for (std::size_t i = 0; i < x.size(); ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
    return y;
}

// ---------------------------------------------------------------------------
// Cost
// ---------------------------------------------------------------------------

/// Root of the summed squared error over (n * population variance of pred).
inline double nrmse(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size()) throw ValidationError("nrmse: length mismatch");
    if (pred.size() < 2) throw ValidationError("nrmse needs at least two values");
    const double n = static_cast<double>(pred.size());
    const double mean = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
    double var = 0.0;
    double sse = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        var += (pred[i] - mean) * (pred[i] - mean);
        sse += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    }
    var /= n;
    if (!(var > 0.0)) throw NumericError("nrmse undefined: predictions have zero variance");
    return std::sqrt(sse / (n * var));
}

/// NRMSE and its gradient with respect to each prediction.
inline double nrmse_with_gradient(std::span<const double> pred, std::span<const double> truth,
                                  std::vector<double>& grad) {
    const double loss = nrmse(pred, truth);
    const double n = static_cast<double>(pred.size());
    const double mean = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
    double var = 0.0;
    double sse = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        var += (pred[i] - mean) * (pred[i] - mean);
        sse += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    }
    var /= n;
    grad.assign(pred.size(), 0.0);
    if (loss == 0.0) return loss;
    // loss^2 = sse / (n var);  d var / d p_i = 2 (p_i - mean) / n
    const double scale = 1.0 / (2.0 * loss * n);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double dsse = 2.0 * (pred[i] - truth[i]);
        const double dvar = 2.0 * (pred[i] - mean) / n;
        grad[i] = scale * (dsse / var - sse * dvar / (var * var));
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// conv(in -> conv1, k x k) -> ReLU -> conv(conv1 -> conv2, k x k) -> ReLU -> FC(outputs).
struct Architecture {
    int in_channels = 3;
    int conv1_channels = 16;
    int conv2_channels = 32;
    int kernel = 3;
    int height = 120;
    int width = 1;
    int outputs = 120;

    std::size_t conv1_weights() const { return static_cast<std::size_t>(conv1_channels) * in_channels * kernel * kernel; }
    std::size_t conv2_weights() const { return static_cast<std::size_t>(conv2_channels) * conv1_channels * kernel * kernel; }
    std::size_t flat_features() const { return static_cast<std::size_t>(conv2_channels) * height * width; }
    std::size_t fc_weights() const { return static_cast<std::size_t>(outputs) * flat_features(); }
    std::size_t parameter_count() const {
        return conv1_weights() + conv1_channels + conv2_weights() + conv2_channels + fc_weights() + outputs;
    }

    void validate() const {
        if (in_channels < 1 || conv1_channels < 1 || conv2_channels < 1 || height < 1 || width < 1 || outputs < 1) {
            throw ValidationError("architecture dimensions must be positive");
        }
        if (kernel < 1 || kernel % 2 == 0) throw ValidationError("kernel size must be odd");
    }

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Named slices of the flat parameter vector, in declaration order.
struct ParameterLayout {
    std::size_t conv1_w, conv1_b, conv2_w, conv2_b, fc_w, fc_b, total;

    explicit ParameterLayout(const Architecture& a) {
        conv1_w = 0;
        conv1_b = conv1_w + a.conv1_weights();
        conv2_w = conv1_b + a.conv1_channels;
        conv2_b = conv2_w + a.conv2_weights();
        fc_w = conv2_b + a.conv2_channels;
        fc_b = fc_w + a.fc_weights();
        total = fc_b + a.outputs;
    }
};

/// Per-channel input and scalar output affine normalization, fitted on training data.
struct Normalization {
    std::vector<double> input_mean;
    std::vector<double> input_scale;
    double output_mean = 0.0;
    double output_scale = 1.0;

    friend bool operator==(const Normalization&, const Normalization&) = default;
};

struct CNNModel {
    Architecture arch;
    std::vector<double> params;
    Normalization norm;
    std::uint64_t seed = 0;

    ParameterLayout layout() const { return ParameterLayout(arch); }

    std::span<const double> slice(std::size_t begin, std::size_t end) const {
        return std::span<const double>(params).subspan(begin, end - begin);
    }
    std::span<const double> conv1_w() const { auto l = layout(); return slice(l.conv1_w, l.conv1_b); }
    std::span<const double> conv1_b() const { auto l = layout(); return slice(l.conv1_b, l.conv2_w); }
    std::span<const double> conv2_w() const { auto l = layout(); return slice(l.conv2_w, l.conv2_b); }
    std::span<const double> conv2_b() const { auto l = layout(); return slice(l.conv2_b, l.fc_w); }
    std::span<const double> fc_w() const { auto l = layout(); return slice(l.fc_w, l.fc_b); }
    std::span<const double> fc_b() const { auto l = layout(); return slice(l.fc_b, l.total); }

    friend bool operator==(const CNNModel&, const CNNModel&) = default;
};

/// He-normal weights from the "init" substream of `seed`. Biases start at zero
/// unless `random_biases` is set (used by gradient checks).
inline CNNModel init_model(const Architecture& arch, std::uint64_t seed, bool random_biases = false) {
    arch.validate();
    CNNModel m;
    m.arch = arch;
    m.seed = seed;
    const ParameterLayout l(arch);
    m.params.assign(l.total, 0.0);
    m.norm.input_mean.assign(static_cast<std::size_t>(arch.in_channels), 0.0);
    m.norm.input_scale.assign(static_cast<std::size_t>(arch.in_channels), 1.0);

    Rng rng = substream(seed, "init");
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill = [&](std::size_t begin, std::size_t end, double stddev) {
        for (std::size_t i = begin; i < end; ++i) m.params[i] = stddev * normal(rng);
    };
    const double k2 = static_cast<double>(arch.kernel * arch.kernel);
    fill(l.conv1_w, l.conv1_b, std::sqrt(2.0 / (arch.in_channels * k2)));
    fill(l.conv2_w, l.conv2_b, std::sqrt(2.0 / (arch.conv1_channels * k2)));
    fill(l.fc_w, l.fc_b, std::sqrt(1.0 / static_cast<double>(arch.flat_features())));
    if (random_biases) {
        fill(l.conv1_b, l.conv2_w, 0.5);
        fill(l.conv2_b, l.fc_w, 0.5);
        fill(l.fc_b, l.total, 0.5);
    }
    return m;
}

/// Activations kept for the backward pass.
struct ForwardCache {
    Tensor input;
    Tensor conv1;  // pre-activation
    Tensor act1;
    Tensor conv2;  // pre-activation
    Tensor act2;
    std::vector<double> output;
};

inline void check_input_shape(const Architecture& a, const Tensor& x) {
    if (x.channels != a.in_channels || x.height != a.height || x.width != a.width) {
        throw ValidationError("input tensor shape (" + std::to_string(x.channels) + "," + std::to_string(x.height) +
                              "," + std::to_string(x.width) + ") does not match the model");
    }
}

/// Forward pass in normalized space (no input/output scaling applied).
inline ForwardCache forward(const CNNModel& m, const Tensor& x) {
    check_input_shape(m.arch, x);
    ForwardCache c;
    c.input = x;
    c.conv1 = conv2d_forward(x, m.conv1_w(), m.conv1_b(), m.arch.conv1_channels, m.arch.kernel);
    c.act1 = relu(c.conv1);
    c.conv2 = conv2d_forward(c.act1, m.conv2_w(), m.conv2_b(), m.arch.conv2_channels, m.arch.kernel);
    c.act2 = relu(c.conv2);
    c.output = fc_forward(c.act2.data, m.fc_w(), m.fc_b());
    return c;
}

/// Accumulates parameter gradients for one sample given d loss / d output.
inline void backward(const CNNModel& m, const ForwardCache& c, std::span<const double> grad_out,
                     std::span<double> grad) {
    const auto l = m.layout();
    const auto& a = m.arch;
    const std::size_t nin = c.act2.size();

    // fully connected
    Tensor g_act2(a.conv2_channels, a.height, a.width);
    const auto w = m.fc_w();
    for (std::size_t o = 0; o < grad_out.size(); ++o) {
        const double g = grad_out[o];
        if (g == 0.0) continue;
        grad[l.fc_b + o] += g;
        double* gw = grad.data() + l.fc_w + o * nin;
        const double* row = w.data() + o * nin;
        for (std::size_t i = 0; i < nin; ++i) {
            gw[i] += g * c.act2.data[i];
            g_act2.data[i] += g * row[i];
        }
    }
    for (std::size_t i = 0; i < nin; ++i) {
        if (!(c.conv2.data[i] > 0.0)) g_act2.data[i] = 0.0;
    }

    Tensor g_act1;
    conv2d_backward(c.act1, m.conv2_w(), a.conv2_channels, a.kernel, g_act2, &g_act1,
                    grad.subspan(l.conv2_w, l.conv2_b - l.conv2_w), grad.subspan(l.conv2_b, l.fc_w - l.conv2_b));
    for (std::size_t i = 0; i < g_act1.size(); ++i) {
        if (!(c.conv1.data[i] > 0.0)) g_act1.data[i] = 0.0;
    }
    conv2d_backward(c.input, m.conv1_w(), a.conv1_channels, a.kernel, g_act1, nullptr,
                    grad.subspan(l.conv1_w, l.conv1_b - l.conv1_w), grad.subspan(l.conv1_b, l.conv2_w - l.conv1_b));
}

/// One training example: REK tensor (channels RC, DC, BC over the trajectory)
/// and the path-loss target in dB.
struct Sample {
    Tensor input;
    std::vector<double> target;
};

/// Batch NRMSE (over all outputs of all samples, in the model's normalized
/// space) and its gradient with respect to every parameter.
inline double loss_and_gradient(const CNNModel& m, std::span<const Sample* const> batch, std::vector<double>& grad) {
    grad.assign(m.params.size(), 0.0);
    std::vector<ForwardCache> caches;
    caches.reserve(batch.size());
    std::vector<double> pred;
    std::vector<double> truth;
    for (const Sample* s : batch) {
        caches.push_back(forward(m, s->input));
        pred.insert(pred.end(), caches.back().output.begin(), caches.back().output.end());
        truth.insert(truth.end(), s->target.begin(), s->target.end());
    }
    std::vector<double> gpred;
    const double loss = nrmse_with_gradient(pred, truth, gpred);
    const std::size_t outs = static_cast<std::size_t>(m.arch.outputs);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        backward(m, caches[b], std::span<const double>(gpred).subspan(b * outs, outs), grad);
    }
    return loss;
}

inline double loss_only(const CNNModel& m, std::span<const Sample* const> batch) {
    std::vector<double> pred;
    std::vector<double> truth;
    for (const Sample* s : batch) {
        const auto out = forward(m, s->input).output;
        pred.insert(pred.end(), out.begin(), out.end());
        truth.insert(truth.end(), s->target.begin(), s->target.end());
    }
    return nrmse(pred, truth);
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

struct GradientCheckReport {
    double conv1 = 0.0;
    double conv2 = 0.0;
    double fc = 0.0;
    std::size_t parameters = 0;

    double max() const { return std::max({conv1, conv2, fc}); }
};

/// Central finite differences against backprop over every parameter. Relative
/// error is |a - n| / max(|a|, |n|, 1e-6).
inline GradientCheckReport gradient_check(const CNNModel& model, const Sample& sample, double eps = 1e-5) {
    const Sample* batch[] = {&sample};
    std::vector<double> analytic;
    loss_and_gradient(model, batch, analytic);
    CNNModel probe = model;
    const auto l = model.layout();
    GradientCheckReport report;
    report.parameters = model.params.size();
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        const double orig = probe.params[i];
        probe.params[i] = orig + eps;
        const double up = loss_only(probe, batch);
        probe.params[i] = orig - eps;
        const double down = loss_only(probe, batch);
        probe.params[i] = orig;
        const double numeric = (up - down) / (2.0 * eps);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
        const double rel = std::abs(analytic[i] - numeric) / denom;
        double& slot = i < l.conv2_w ? report.conv1 : (i < l.fc_w ? report.conv2 : report.fc);
        slot = std::max(slot, rel);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    int batch_size = 16;
    double learning_rate = 1e-3;
    int epochs = 200;
    /// Stop after this many epochs without a held-out improvement (0 disables).
    int patience = 20;
    double train_fraction = 0.75;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const {
        if (batch_size < 1) throw ValidationError("batch size must be at least 1");
        if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train fraction must lie in (0, 1)");
        if (epochs < 0) throw ValidationError("epochs must be non-negative");
        if (!(learning_rate >= 0.0)) throw ValidationError("learning rate must be non-negative");
    }
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// floor(fraction * n) shuffled samples train, the rest test. With n >= 2
/// both sides keep at least one sample.
inline Split split_indices(std::size_t n, double fraction, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = substream(seed, "split");
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    std::size_t n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    if (n >= 2) n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    else n_train = n;
    Split s;
    s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    return s;
}

struct EpochLog {
    int epoch = 0;
    double train_nrmse = 0.0;
    double test_nrmse = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    CNNModel model;
    std::vector<EpochLog> history;
    Split split;
};

/// Fits input/output normalization on the given samples.
inline Normalization fit_normalization(std::span<const Sample* const> samples, int channels) {
    Normalization n;
    n.input_mean.assign(static_cast<std::size_t>(channels), 0.0);
    n.input_scale.assign(static_cast<std::size_t>(channels), 1.0);
    std::vector<double> count(static_cast<std::size_t>(channels), 0.0);
    std::vector<double> sq(static_cast<std::size_t>(channels), 0.0);
    double ysum = 0.0;
    double ysq = 0.0;
    double ycount = 0.0;
    for (const Sample* s : samples) {
        const std::size_t per = static_cast<std::size_t>(s->input.height) * s->input.width;
        for (int c = 0; c < channels; ++c) {
            for (std::size_t k = 0; k < per; ++k) {
                const double v = s->input.data[c * per + k];
                n.input_mean[c] += v;
                sq[c] += v * v;
                count[c] += 1.0;
            }
        }
        for (double y : s->target) {
            ysum += y;
            ysq += y * y;
            ycount += 1.0;
        }
    }
    for (int c = 0; c < channels; ++c) {
        if (count[c] == 0.0) continue;
        n.input_mean[c] /= count[c];
        const double var = sq[c] / count[c] - n.input_mean[c] * n.input_mean[c];
        n.input_scale[c] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
    if (ycount > 0.0) {
        n.output_mean = ysum / ycount;
        const double var = ysq / ycount - n.output_mean * n.output_mean;
        n.output_scale = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
    return n;
}

inline Tensor normalize_input(const Normalization& n, Tensor x) {
    const std::size_t per = static_cast<std::size_t>(x.height) * x.width;
    for (int c = 0; c < x.channels; ++c) {
        for (std::size_t k = 0; k < per; ++k) {
            double& v = x.data[c * per + k];
            v = (v - n.input_mean[c]) / n.input_scale[c];
        }
    }
    return x;
}

inline Sample normalize_sample(const Normalization& n, const Sample& s) {
    Sample out;
    out.input = normalize_input(n, s.input);
    out.target.reserve(s.target.size());
    for (double y : s.target) out.target.push_back((y - n.output_mean) / n.output_scale);
    return out;
}

/// Path loss in dB for one trajectory tensor.
inline std::vector<double> predict(const CNNModel& m, const Tensor& x) {
    auto out = forward(m, normalize_input(m.norm, x)).output;
    for (auto& v : out) v = v * m.norm.output_scale + m.norm.output_mean;
    return out;
}

/// NRMSE in dB over all outputs of the selected samples.
inline double evaluate_nrmse(const CNNModel& m, const std::vector<Sample>& data, const std::vector<std::size_t>& idx) {
    std::vector<double> pred;
    std::vector<double> truth;
    for (std::size_t i : idx) {
        const auto p = predict(m, data[i].input);
        pred.insert(pred.end(), p.begin(), p.end());
        truth.insert(truth.end(), data[i].target.begin(), data[i].target.end());
    }
    return nrmse(pred, truth);
}

/// Mini-batch Adam on batch NRMSE. Deterministic given cfg.seed: the split,
/// initialization and per-epoch shuffles each come from their own substream.
inline TrainResult train(const std::vector<Sample>& dataset, const Architecture& arch, const TrainConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) throw ValidationError("training needs a non-empty dataset");
    for (const auto& s : dataset) {
        check_input_shape(arch, s.input);
        if (s.target.size() != static_cast<std::size_t>(arch.outputs)) {
            throw ValidationError("target length does not match the model outputs");
        }
    }

    TrainResult result;
    result.split = split_indices(dataset.size(), cfg.train_fraction, cfg.seed);
    CNNModel model = init_model(arch, cfg.seed);

    std::vector<const Sample*> train_raw;
    for (std::size_t i : result.split.train) train_raw.push_back(&dataset[i]);
    model.norm = fit_normalization(train_raw, arch.in_channels);

    std::vector<Sample> normalized;
    normalized.reserve(dataset.size());
    for (const auto& s : dataset) normalized.push_back(normalize_sample(model.norm, s));
    std::vector<const Sample*> train_set;
    std::vector<const Sample*> test_set;
    for (std::size_t i : result.split.train) train_set.push_back(&normalized[i]);
    for (std::size_t i : result.split.test) test_set.push_back(&normalized[i]);

    std::vector<double> m1(model.params.size(), 0.0);
    std::vector<double> m2(model.params.size(), 0.0);
    std::vector<double> grad;
    long step = 0;
    double best_test = std::numeric_limits<double>::infinity();
    int since_best = 0;
    Rng shuffle = substream(cfg.seed, "shuffle");
    const auto start = std::chrono::steady_clock::now();

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<const Sample*> order = train_set;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle() % i]);

        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            std::span<const Sample* const> batch(order.data() + b, e - b);
            const double loss = loss_and_gradient(model, batch, grad);
            if (!std::isfinite(loss)) {
                throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
            }
            ++step;
            const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            for (std::size_t i = 0; i < model.params.size(); ++i) {
                m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * grad[i];
                m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
                model.params[i] -= cfg.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + cfg.adam_eps);
            }
        }

        EpochLog log;
        log.epoch = epoch;
        log.train_nrmse = loss_only(model, train_set);
        log.test_nrmse = test_set.empty() ? std::nan("") : loss_only(model, test_set);
        log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!std::isfinite(log.train_nrmse)) {
            throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
        }
        result.history.push_back(log);

        if (cfg.patience > 0 && !test_set.empty()) {
            if (log.test_nrmse < best_test) {
                best_test = log.test_nrmse;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                break;
            }
        }
    }
    result.model = std::move(model);
    return result;
}

inline std::string training_log_csv(const std::vector<EpochLog>& history) {
    std::ostringstream out;
    out << "epoch,train_nrmse,test_nrmse,seconds\n";
    for (const auto& e : history) {
        out << e.epoch << ',' << format_double(e.train_nrmse) << ',' << format_double(e.test_nrmse) << ','
            << format_double(e.seconds) << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline nlohmann::json model_to_json(const CNNModel& m) {
    const auto l = m.layout();
    auto arr = [&](std::size_t b, std::size_t e) {
        return nlohmann::json(std::vector<double>(m.params.begin() + static_cast<std::ptrdiff_t>(b),
                                                  m.params.begin() + static_cast<std::ptrdiff_t>(e)));
    };
    nlohmann::json j;
    j["format"] = "rek-cnn";
    j["version"] = 1;
    j["seed"] = m.seed;
    j["architecture"] = {{"in_channels", m.arch.in_channels}, {"conv1_channels", m.arch.conv1_channels},
                         {"conv2_channels", m.arch.conv2_channels}, {"kernel", m.arch.kernel},
                         {"height", m.arch.height}, {"width", m.arch.width}, {"outputs", m.arch.outputs}};
    j["normalization"] = {{"input_mean", m.norm.input_mean}, {"input_scale", m.norm.input_scale},
                          {"output_mean", m.norm.output_mean}, {"output_scale", m.norm.output_scale}};
    j["parameters"] = nlohmann::json::array({
        {{"name", "conv1.weight"}, {"values", arr(l.conv1_w, l.conv1_b)}},
        {{"name", "conv1.bias"}, {"values", arr(l.conv1_b, l.conv2_w)}},
        {{"name", "conv2.weight"}, {"values", arr(l.conv2_w, l.conv2_b)}},
        {{"name", "conv2.bias"}, {"values", arr(l.conv2_b, l.fc_w)}},
        {{"name", "fc.weight"}, {"values", arr(l.fc_w, l.fc_b)}},
        {{"name", "fc.bias"}, {"values", arr(l.fc_b, l.total)}},
    });
    return j;
}

inline CNNModel model_from_json(const nlohmann::json& j) {
    CNNModel m;
    try {
        if (j.at("format").get<std::string>() != "rek-cnn") throw ParseError("not a rek-cnn checkpoint");
        if (j.at("version").get<int>() != 1) throw ParseError("unsupported checkpoint version");
        m.seed = j.at("seed").get<std::uint64_t>();
        const auto& a = j.at("architecture");
        m.arch.in_channels = a.at("in_channels").get<int>();
        m.arch.conv1_channels = a.at("conv1_channels").get<int>();
        m.arch.conv2_channels = a.at("conv2_channels").get<int>();
        m.arch.kernel = a.at("kernel").get<int>();
        m.arch.height = a.at("height").get<int>();
        m.arch.width = a.at("width").get<int>();
        m.arch.outputs = a.at("outputs").get<int>();
        m.arch.validate();
        const auto& n = j.at("normalization");
        m.norm.input_mean = n.at("input_mean").get<std::vector<double>>();
        m.norm.input_scale = n.at("input_scale").get<std::vector<double>>();
        m.norm.output_mean = n.at("output_mean").get<double>();
        m.norm.output_scale = n.at("output_scale").get<double>();
        if (m.norm.input_mean.size() != static_cast<std::size_t>(m.arch.in_channels) ||
            m.norm.input_scale.size() != static_cast<std::size_t>(m.arch.in_channels)) {
            throw ValidationError("checkpoint normalization does not match input channels");
        }

        const ParameterLayout l(m.arch);
        const std::vector<std::pair<std::string, std::size_t>> expected = {
            {"conv1.weight", l.conv1_b - l.conv1_w}, {"conv1.bias", l.conv2_w - l.conv1_b},
            {"conv2.weight", l.conv2_b - l.conv2_w}, {"conv2.bias", l.fc_w - l.conv2_b},
            {"fc.weight", l.fc_b - l.fc_w},           {"fc.bias", l.total - l.fc_b}};
        const auto& params = j.at("parameters");
        if (params.size() != expected.size()) throw ValidationError("checkpoint has wrong number of parameter arrays");
        for (std::size_t i = 0; i < expected.size(); ++i) {
            if (params[i].at("name").get<std::string>() != expected[i].first) {
                throw ValidationError("checkpoint parameter order mismatch at " + expected[i].first);
            }
            auto values = params[i].at("values").get<std::vector<double>>();
            if (values.size() != expected[i].second) {
                throw ValidationError("checkpoint array " + expected[i].first + " has the wrong size");
            }
            m.params.insert(m.params.end(), values.begin(), values.end());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint schema: ") + e.what());
    }
    return m;
}

inline CNNModel load_model(const std::string& text) {
    try {
        return model_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
}

inline std::string dump_model(const CNNModel& m) { return model_to_json(m).dump() + "\n"; }

/// Builds the (3, J, 1) tensor from spectrum rows of (RC, DC, BC).
inline Tensor spectrum_tensor(const std::vector<std::array<double, 3>>& rows) {
    Tensor t(3, static_cast<int>(rows.size()), 1);
    for (std::size_t j = 0; j < rows.size(); ++j) {
        for (int c = 0; c < 3; ++c) t.at(c, static_cast<int>(j), 0) = rows[j][static_cast<std::size_t>(c)];
    }
    return t;
}

}  // namespace rek::nn
