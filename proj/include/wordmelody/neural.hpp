#ifndef WORDMELODY_NEURAL_HPP
#define WORDMELODY_NEURAL_HPP

// Conditional LSTM note-word language model with an exact backward pass.
//
// Per step t:  x_t = [E[token_t] ; condition]
//              i,f,o = sigmoid(Wx_{i,f,o} x_t + Wh_{i,f,o} h_{t-1} + b_{i,f,o})
//              g     = tanh(Wx_g x_t + Wh_g h_{t-1} + b_g)
//              c_t = f*c_{t-1} + i*g,  h_t = o*tanh(c_t)
//              logits_t = U dropout(h_t) + b_U
// Gate blocks are stacked in the order i, f, o, g. All math is double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "wordmelody/error.hpp"
#include "wordmelody/rng.hpp"

namespace wordmelody::neural {

using TokenId = std::int32_t;

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims)
        : shape(std::move(dims)), values(std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>()), 0.0) {}

    std::size_t size() const { return values.size(); }
    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }
    double* row(std::size_t r) { return values.data() + r * cols(); }
    const double* row(std::size_t r) const { return values.data() + r * cols(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    void zero() { std::fill(values.begin(), values.end(), 0.0); }

    bool operator==(const Tensor&) const = default;
};

inline void require_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw NumericalError(std::string("non-finite value in ") + what);
}

enum class ConditionFeed { EveryStep, FirstStepOnly };

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t embed_dim = 256;
    std::size_t hidden_dim = 256;
    std::size_t condition_dim = 60;
    ConditionFeed feed = ConditionFeed::EveryStep;

    std::size_t input_dim() const { return embed_dim + condition_dim; }
    bool operator==(const ModelConfig&) const = default;
};

struct ModelParams {
    ModelConfig config;
    Tensor embedding;          // V x E
    Tensor input_weights;      // 4H x (E + C)
    Tensor recurrent_weights;  // 4H x H
    Tensor gate_bias;          // 4H
    Tensor output_weights;     // V x H
    Tensor output_bias;        // V

    explicit ModelParams(const ModelConfig& c = {})
        : config(c),
          embedding({c.vocab_size, c.embed_dim}),
          input_weights({4 * c.hidden_dim, c.input_dim()}),
          recurrent_weights({4 * c.hidden_dim, c.hidden_dim}),
          gate_bias({4 * c.hidden_dim}),
          output_weights({c.vocab_size, c.hidden_dim}),
          output_bias({c.vocab_size}) {}

    template <typename Self, typename F>
    static void visit(Self& self, F&& f) {
        f("embedding", self.embedding);
        f("input_weights", self.input_weights);
        f("recurrent_weights", self.recurrent_weights);
        f("gate_bias", self.gate_bias);
        f("output_weights", self.output_weights);
        f("output_bias", self.output_bias);
    }
    template <typename F>
    void for_each(F&& f) { visit(*this, std::forward<F>(f)); }
    template <typename F>
    void for_each(F&& f) const { visit(*this, std::forward<F>(f)); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for_each([&](const char*, const Tensor& t) { n += t.size(); });
        return n;
    }

    void zero() {
        for_each([](const char*, Tensor& t) { t.zero(); });
    }

    bool operator==(const ModelParams&) const = default;
};

using Gradients = ModelParams;

inline std::size_t parameter_count(const ModelConfig& c) {
    const std::size_t h4 = 4 * c.hidden_dim;
    return c.vocab_size * c.embed_dim + h4 * c.input_dim() + h4 * c.hidden_dim + h4 + c.vocab_size * c.hidden_dim + c.vocab_size;
}

// Weights uniform in [-scale, scale], biases zero.
inline ModelParams init_params(const ModelConfig& config, std::uint64_t seed, double scale = 0.08) {
    ModelParams p(config);
    Rng rng(seed);
    for (Tensor* t : {&p.embedding, &p.input_weights, &p.recurrent_weights, &p.output_weights})
        for (double& v : t->values) v = rng.uniform(-scale, scale);
    return p;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// out += M v  for row-major M (rows x cols).
inline void matvec_add(const double* m, std::size_t rows, std::size_t cols, const double* v, double* out) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* mr = m + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += mr[c] * v[c];
        out[r] += acc;
    }
}

// out += M^T v
inline void matvec_t_add(const double* m, std::size_t rows, std::size_t cols, const double* v, double* out) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double vr = v[r];
        if (vr == 0.0) continue;
        const double* mr = m + r * cols;
        for (std::size_t c = 0; c < cols; ++c) out[c] += vr * mr[c];
    }
}

// M += a b^T
inline void outer_add(double* m, std::size_t rows, std::size_t cols, const double* a, const double* b) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double ar = a[r];
        if (ar == 0.0) continue;
        double* mr = m + r * cols;
        for (std::size_t c = 0; c < cols; ++c) mr[c] += ar * b[c];
    }
}

struct LstmState {
    std::vector<double> h;
    std::vector<double> c;
};

struct LstmStepResult {
    std::vector<double> input_gate, forget_gate, output_gate, candidate;
    std::vector<double> c, tanh_c, h;
};

inline LstmStepResult lstm_step(const ModelParams& params, std::span<const double> x, std::span<const double> h_prev,
                                std::span<const double> c_prev) {
    const std::size_t hd = params.config.hidden_dim;
    if (x.size() != params.config.input_dim() || h_prev.size() != hd || c_prev.size() != hd)
        throw Error("lstm_step: dimension mismatch");
    std::vector<double> pre(params.gate_bias.values);
    matvec_add(params.input_weights.values.data(), 4 * hd, x.size(), x.data(), pre.data());
    matvec_add(params.recurrent_weights.values.data(), 4 * hd, hd, h_prev.data(), pre.data());
    LstmStepResult r;
    r.input_gate.resize(hd);
    r.forget_gate.resize(hd);
    r.output_gate.resize(hd);
    r.candidate.resize(hd);
    r.c.resize(hd);
    r.tanh_c.resize(hd);
    r.h.resize(hd);
    for (std::size_t k = 0; k < hd; ++k) {
        r.input_gate[k] = sigmoid(pre[k]);
        r.forget_gate[k] = sigmoid(pre[hd + k]);
        r.output_gate[k] = sigmoid(pre[2 * hd + k]);
        r.candidate[k] = std::tanh(pre[3 * hd + k]);
        r.c[k] = r.forget_gate[k] * c_prev[k] + r.input_gate[k] * r.candidate[k];
        r.tanh_c[k] = std::tanh(r.c[k]);
        r.h[k] = r.output_gate[k] * r.tanh_c[k];
    }
    require_finite(r.c, "LSTM cell state");
    require_finite(r.h, "LSTM hidden state");
    return r;
}

// Everything the backward pass needs from one forward run.
struct ForwardTrace {
    std::vector<TokenId> tokens;
    std::vector<std::vector<double>> inputs;   // x_t
    std::vector<LstmStepResult> steps;
    std::vector<std::vector<double>> masks;    // inverted-dropout multipliers, empty when off
    std::vector<std::vector<double>> dropped;  // h_t after dropout
    std::vector<std::vector<double>> logits;
};

inline std::vector<double> step_input(const ModelParams& params, TokenId token, std::span<const double> condition, std::size_t t) {
    const auto& cfg = params.config;
    if (token < 0 || static_cast<std::size_t>(token) >= cfg.vocab_size)
        throw Error("token id " + std::to_string(token) + " out of range");
    std::vector<double> x(cfg.input_dim(), 0.0);
    const double* e = params.embedding.row(static_cast<std::size_t>(token));
    std::copy(e, e + cfg.embed_dim, x.begin());
    if (t == 0 || cfg.feed == ConditionFeed::EveryStep)
        std::copy(condition.begin(), condition.end(), x.begin() + static_cast<std::ptrdiff_t>(cfg.embed_dim));
    return x;
}

inline std::vector<double> project(const ModelParams& params, std::span<const double> h) {
    std::vector<double> logits(params.output_bias.values);
    matvec_add(params.output_weights.values.data(), params.config.vocab_size, params.config.hidden_dim, h.data(), logits.data());
    require_finite(logits, "logits");
    return logits;
}

// Teacher-forced run over `tokens` (which start with BOS). Dropout with
// probability `dropout_p` is applied to h_t before the projection when an
// rng is supplied; surviving units are scaled by 1/(1-p).
inline ForwardTrace forward_sample(const ModelParams& params, std::span<const double> condition,
                                   std::span<const TokenId> tokens, double dropout_p = 0.0, Rng* rng = nullptr) {
    const auto& cfg = params.config;
    if (condition.size() != cfg.condition_dim)
        throw Error("condition vector has dimension " + std::to_string(condition.size()) + ", model expects " +
                    std::to_string(cfg.condition_dim));
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw Error("dropout probability must be in [0, 1)");
    ForwardTrace tr;
    tr.tokens.assign(tokens.begin(), tokens.end());
    std::vector<double> h(cfg.hidden_dim, 0.0), c(cfg.hidden_dim, 0.0);
    const bool dropout = rng != nullptr && dropout_p > 0.0;
    const double keep_scale = 1.0 / (1.0 - dropout_p);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        tr.inputs.push_back(step_input(params, tokens[t], condition, t));
        tr.steps.push_back(lstm_step(params, tr.inputs.back(), h, c));
        const auto& step = tr.steps.back();
        h = step.h;
        c = step.c;
        std::vector<double> hd = h;
        if (dropout) {
            std::vector<double> mask(cfg.hidden_dim);
            for (std::size_t k = 0; k < cfg.hidden_dim; ++k) {
                mask[k] = rng->bernoulli(dropout_p) ? 0.0 : keep_scale;
                hd[k] *= mask[k];
            }
            tr.masks.push_back(std::move(mask));
        }
        tr.logits.push_back(project(params, hd));
        tr.dropped.push_back(std::move(hd));
    }
    return tr;
}

inline std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0) {
    std::vector<double> p(logits.size());
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp((logits[i] - m) / temperature);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

inline double log_softmax_at(std::span<const double> logits, std::size_t index) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - m);
    return logits[index] - m - std::log(z);
}

// Mean over timesteps of -log softmax(logits_t)[target_t].
inline double cross_entropy(const std::vector<std::vector<double>>& logits, std::span<const TokenId> targets) {
    if (logits.size() != targets.size())
        throw Error("cross_entropy: " + std::to_string(logits.size()) + " logit vectors for " +
                    std::to_string(targets.size()) + " targets");
    if (logits.empty()) throw Error("cross_entropy: empty sequence");
    double sum = 0.0;
    for (std::size_t t = 0; t < logits.size(); ++t) {
        if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= logits[t].size()) throw Error("target id out of range");
        sum -= log_softmax_at(logits[t], static_cast<std::size_t>(targets[t]));
    }
    const double loss = sum / static_cast<double>(logits.size());
    if (!std::isfinite(loss)) throw NumericalError("non-finite cross-entropy");
    return loss;
}

struct RangeRegConfig {
    int p_min = 60;
    int p_max = 72;
    double mu = 0.0001;
};

// Per-token pitch-range penalty. Entries with pitch < 0 (reserved tokens)
// get weight 0.
inline std::vector<double> range_penalty_weights(std::span<const int> pitches, const RangeRegConfig& cfg) {
    if (cfg.p_min > cfg.p_max) throw Error("p_min must not exceed p_max");
    if (cfg.mu < 0.0) throw Error("regularization coefficient must be non-negative");
    std::vector<double> w(pitches.size(), 0.0);
    for (std::size_t i = 0; i < pitches.size(); ++i) {
        const int p = pitches[i];
        if (p < 0) continue;
        w[i] = p > cfg.p_min ? std::max(p - cfg.p_max, 0) : cfg.p_min - p;
    }
    return w;
}

// C = sum_j W_j P_j
inline double expected_penalty(std::span<const double> probs, std::span<const double> weights) {
    double c = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j) c += weights[j] * probs[j];
    return c;
}

// mu * P_i * (W_i - C): the gradient of mu*C with respect to the logits.
inline std::vector<double> regularized_softmax_grad(std::span<const double> probs, std::span<const double> weights, double mu) {
    if (probs.size() != weights.size()) throw Error("probability and weight vectors differ in length");
    const double c = expected_penalty(probs, weights);
    std::vector<double> g(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) g[i] = mu * probs[i] * (weights[i] - c);
    return g;
}

// Reverse-mode gradient of
//   L = (1/n) sum_t [ -log P_t[target_t] + R_t ]
// where dR_t/dlogits_t = addends[t] (pass an empty list for no regularizer).
// Accumulates `scale * dL/dtheta` into `grads`.
inline void backward_sample(const ModelParams& params, const ForwardTrace& tr, std::span<const TokenId> targets,
                            const std::vector<std::vector<double>>& addends, Gradients& grads, double scale = 1.0) {
    const auto& cfg = params.config;
    const std::size_t n = tr.tokens.size();
    const std::size_t hd = cfg.hidden_dim;
    const std::size_t in = cfg.input_dim();
    const std::size_t v = cfg.vocab_size;
    if (targets.size() != n) throw Error("backward_sample: target length mismatch");
    if (!addends.empty() && addends.size() != n) throw Error("backward_sample: addend length mismatch");

    const double inv_n = scale / static_cast<double>(n);
    std::vector<double> dh_next(hd, 0.0), dc_next(hd, 0.0);
    std::vector<double> dz(v), dh(hd), da(4 * hd), dx(in);
    const std::vector<double> zeros(hd, 0.0);

    for (std::size_t t = n; t-- > 0;) {
        const auto probs = softmax(tr.logits[t]);
        for (std::size_t j = 0; j < v; ++j) dz[j] = probs[j];
        dz[static_cast<std::size_t>(targets[t])] -= 1.0;
        if (!addends.empty())
            for (std::size_t j = 0; j < v; ++j) dz[j] += addends[t][j];
        for (double& d : dz) d *= inv_n;

        outer_add(grads.output_weights.values.data(), v, hd, dz.data(), tr.dropped[t].data());
        for (std::size_t j = 0; j < v; ++j) grads.output_bias[j] += dz[j];

        std::fill(dh.begin(), dh.end(), 0.0);
        matvec_t_add(params.output_weights.values.data(), v, hd, dz.data(), dh.data());
        if (!tr.masks.empty())
            for (std::size_t k = 0; k < hd; ++k) dh[k] *= tr.masks[t][k];
        for (std::size_t k = 0; k < hd; ++k) dh[k] += dh_next[k];

        const auto& s = tr.steps[t];
        const std::vector<double>& c_prev = t > 0 ? tr.steps[t - 1].c : zeros;
        const std::vector<double>& h_prev = t > 0 ? tr.steps[t - 1].h : zeros;
        for (std::size_t k = 0; k < hd; ++k) {
            const double i = s.input_gate[k], f = s.forget_gate[k], o = s.output_gate[k], g = s.candidate[k];
            const double dout = dh[k] * s.tanh_c[k];
            const double dc = dh[k] * o * (1.0 - s.tanh_c[k] * s.tanh_c[k]) + dc_next[k];
            da[k] = dc * g * i * (1.0 - i);
            da[hd + k] = dc * c_prev[k] * f * (1.0 - f);
            da[2 * hd + k] = dout * o * (1.0 - o);
            da[3 * hd + k] = dc * i * (1.0 - g * g);
            dc_next[k] = dc * f;
        }
        outer_add(grads.input_weights.values.data(), 4 * hd, in, da.data(), tr.inputs[t].data());
        outer_add(grads.recurrent_weights.values.data(), 4 * hd, hd, da.data(), h_prev.data());
        for (std::size_t k = 0; k < 4 * hd; ++k) grads.gate_bias[k] += da[k];

        std::fill(dx.begin(), dx.end(), 0.0);
        matvec_t_add(params.input_weights.values.data(), 4 * hd, in, da.data(), dx.data());
        double* de = grads.embedding.row(static_cast<std::size_t>(tr.tokens[t]));
        for (std::size_t k = 0; k < cfg.embed_dim; ++k) de[k] += dx[k];

        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        matvec_t_add(params.recurrent_weights.values.data(), 4 * hd, hd, da.data(), dh_next.data());
    }
}

struct SampleLoss {
    double cross_entropy = 0.0;
    double penalty = 0.0;  // mean over steps of C_t
    double objective(double mu) const { return cross_entropy + mu * penalty; }
};

// Value of the regularized objective without gradients.
inline SampleLoss evaluate_sample(const ModelParams& params, std::span<const double> condition, std::span<const TokenId> tokens,
                                  std::span<const TokenId> targets, std::span<const double> penalty_weights) {
    const auto tr = forward_sample(params, condition, tokens);
    SampleLoss loss;
    loss.cross_entropy = cross_entropy(tr.logits, targets);
    if (!penalty_weights.empty()) {
        for (const auto& l : tr.logits) loss.penalty += expected_penalty(softmax(l), penalty_weights);
        loss.penalty /= static_cast<double>(tr.logits.size());
    }
    return loss;
}

// Forward + backward for one sample of the regularized objective
// mean_t(CE_t) + mu * mean_t(C_t). Gradients are accumulated times `scale`.
inline SampleLoss accumulate_sample_gradient(const ModelParams& params, std::span<const double> condition,
                                             std::span<const TokenId> tokens, std::span<const TokenId> targets,
                                             std::span<const double> penalty_weights, double mu, double dropout_p,
                                             Rng* rng, Gradients& grads, double scale = 1.0) {
    const auto tr = forward_sample(params, condition, tokens, dropout_p, rng);
    SampleLoss loss;
    loss.cross_entropy = cross_entropy(tr.logits, targets);
    std::vector<std::vector<double>> addends;
    if (!penalty_weights.empty()) {
        addends.reserve(tr.logits.size());
        for (const auto& l : tr.logits) {
            const auto p = softmax(l);
            loss.penalty += expected_penalty(p, penalty_weights);
            if (mu != 0.0) addends.push_back(regularized_softmax_grad(p, penalty_weights, mu));
        }
        loss.penalty /= static_cast<double>(tr.logits.size());
    }
    backward_sample(params, tr, targets, addends, grads, scale);
    return loss;
}

inline void require_finite(const Gradients& g) {
    g.for_each([](const char* name, const Tensor& t) {
        for (double x : t.values)
            if (!std::isfinite(x)) throw NumericalError(std::string("non-finite gradient in ") + name);
    });
}

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    ModelParams first_moment;
    ModelParams second_moment;
    std::uint64_t step = 0;

    explicit AdamState(const ModelConfig& c = {}) : first_moment(c), second_moment(c) {}
};

// Bias-corrected Adam step; increments state.step first.
inline void adam_update(ModelParams& params, const Gradients& grads, AdamState& state, const AdamConfig& cfg = {}) {
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    auto update = [&](Tensor& p, const Tensor& g, Tensor& m, Tensor& v) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            p[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
        }
    };
    update(params.embedding, grads.embedding, state.first_moment.embedding, state.second_moment.embedding);
    update(params.input_weights, grads.input_weights, state.first_moment.input_weights, state.second_moment.input_weights);
    update(params.recurrent_weights, grads.recurrent_weights, state.first_moment.recurrent_weights,
           state.second_moment.recurrent_weights);
    update(params.gate_bias, grads.gate_bias, state.first_moment.gate_bias, state.second_moment.gate_bias);
    update(params.output_weights, grads.output_weights, state.first_moment.output_weights, state.second_moment.output_weights);
    update(params.output_bias, grads.output_bias, state.first_moment.output_bias, state.second_moment.output_bias);
}

// temperature == 0 selects the argmax (lowest id on ties); otherwise a draw
// from softmax(logits / temperature).
inline TokenId sample_token(std::span<const double> logits, double temperature, Rng& rng) {
    if (temperature < 0.0) throw Error("temperature must be non-negative");
    if (logits.empty()) throw Error("empty logits");
    if (temperature == 0.0)
        return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    const auto p = softmax(logits, temperature);
    return static_cast<TokenId>(rng.categorical(p));
}

// Incremental inference state for autoregressive generation.
class Generator {
public:
    Generator(const ModelParams& params, std::span<const double> condition)
        : params_(params), condition_(condition.begin(), condition.end()),
          h_(params.config.hidden_dim, 0.0), c_(params.config.hidden_dim, 0.0) {
        if (condition_.size() != params.config.condition_dim) throw Error("condition vector dimension mismatch");
    }

    std::vector<double> step(TokenId token) {
        const auto x = step_input(params_, token, condition_, t_++);
        auto r = lstm_step(params_, x, h_, c_);
        h_ = std::move(r.h);
        c_ = std::move(r.c);
        return project(params_, h_);
    }

private:
    const ModelParams& params_;
    std::vector<double> condition_;
    std::vector<double> h_, c_;
    std::size_t t_ = 0;
};

}  // namespace wordmelody::neural

#endif  // WORDMELODY_NEURAL_HPP
