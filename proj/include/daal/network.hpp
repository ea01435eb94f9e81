#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "adaptive_line.hpp"
#include "losses.hpp"
#include "numerics.hpp"

namespace daal {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Swish activation x * sigmoid(x).
inline double swish(double x) { return x * sigmoid(x); }

inline double swish_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

enum class ActivationKind { swish, identity };  // identity exists as a test hook

/// Embedding head: hidden dense layers with Swish and dropout, a linear
/// projection to the embedding space, and a linear classification layer on
/// top of the embeddings.
struct NetworkSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims{64, 32};
    std::size_t embedding_dim = 8;
    std::size_t num_classes = 2;
    std::vector<double> dropout_rates{0.2, 0.2};
    ActivationKind activation = ActivationKind::swish;

    void validate() const {
        if (input_dim < 1) throw ConfigError("network spec: input_dim must be >= 1");
        if (hidden_dims.empty()) throw ConfigError("network spec: need at least one hidden layer");
        for (std::size_t w : hidden_dims)
            if (w < 1) throw ConfigError("network spec: hidden widths must be >= 1");
        if (embedding_dim < 1) throw ConfigError("network spec: embedding_dim must be >= 1");
        if (num_classes < 2) throw ConfigError("network spec: num_classes must be >= 2");
        if (dropout_rates.size() != hidden_dims.size())
            throw ConfigError("network spec: one dropout rate per hidden layer");
        for (double r : dropout_rates)
            if (r < 0.0 || r >= 1.0) throw ConfigError("network spec: dropout rates must be in [0, 1)");
    }
};

struct DenseLayer {
    Matrix w;   // in x out
    Vec b;      // out
    Matrix vw;  // momentum buffers, same shapes
    Vec vb;
};

/// Layer order: hidden layers, then the embedding projection, then the
/// classifier. revision counts optimizer steps and guards stale caches.
struct NetworkState {
    NetworkSpec spec;
    std::vector<DenseLayer> layers;
    std::uint64_t revision = 0;

    std::size_t num_hidden() const { return spec.hidden_dims.size(); }
    DenseLayer& classifier() { return layers.back(); }
    const DenseLayer& classifier() const { return layers.back(); }
    const DenseLayer& embedding_layer() const { return layers[layers.size() - 2]; }
};

/// He-style fan-in scaled uniform init, biases zero.
inline NetworkState init_network(const NetworkSpec& spec, Rng& rng) {
    spec.validate();
    NetworkState state;
    state.spec = spec;

    std::vector<std::size_t> dims;
    dims.push_back(spec.input_dim);
    for (std::size_t w : spec.hidden_dims) dims.push_back(w);
    dims.push_back(spec.embedding_dim);
    dims.push_back(spec.num_classes);

    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer layer;
        layer.w = Matrix(dims[l], dims[l + 1]);
        layer.b = Vec(dims[l + 1], 0.0);
        layer.vw = Matrix(dims[l], dims[l + 1]);
        layer.vb = Vec(dims[l + 1], 0.0);
        const double bound = std::sqrt(6.0 / double(dims[l]));
        for (double& v : layer.w.data) v = bound * (2.0 * rng.next_double() - 1.0);
        state.layers.push_back(std::move(layer));
    }
    return state;
}

enum class Mode { train, eval };

struct ForwardCache {
    std::uint64_t revision = 0;
    Matrix input;
    std::vector<Matrix> pre;   // hidden pre-activations
    std::vector<Matrix> act;   // hidden outputs after activation and dropout
    std::vector<Matrix> mask;  // dropout multipliers; empty when inactive
    Matrix embeddings;         // N x embedding_dim
    Matrix logits;             // N x num_classes
};

namespace detail {

inline Matrix dense_forward(const Matrix& in, const DenseLayer& layer) {
    Matrix out(in.rows, layer.w.cols);
    for (std::size_t i = 0; i < in.rows; ++i) {
        for (std::size_t j = 0; j < layer.w.cols; ++j) {
            double acc = layer.b[j];
            for (std::size_t r = 0; r < in.cols; ++r) acc += in(i, r) * layer.w(r, j);
            out(i, j) = acc;
        }
    }
    return out;
}

inline double activate(ActivationKind kind, double x) {
    return kind == ActivationKind::swish ? swish(x) : x;
}

inline double activate_grad(ActivationKind kind, double x) {
    return kind == ActivationKind::swish ? swish_grad(x) : 1.0;
}

}  // namespace detail

/// Runs the dense/Swish/dropout stack. Dropout uses inverted scaling (kept
/// units divided by the keep probability), is active only in train mode, and
/// consumes the rng in a fixed row-major order. Eval mode never touches the
/// rng.
inline ForwardCache forward(const NetworkState& state, const Matrix& input, Mode mode, Rng& rng) {
    if (input.cols != state.spec.input_dim)
        throw DimensionError("forward: input width " + std::to_string(input.cols) +
                             " does not match input_dim " + std::to_string(state.spec.input_dim));

    ForwardCache cache;
    cache.revision = state.revision;
    cache.input = input;

    const std::size_t h = state.num_hidden();
    Matrix current = input;
    for (std::size_t l = 0; l < h; ++l) {
        Matrix pre = detail::dense_forward(current, state.layers[l]);
        Matrix act(pre.rows, pre.cols);
        for (std::size_t i = 0; i < pre.data.size(); ++i)
            act.data[i] = detail::activate(state.spec.activation, pre.data[i]);

        const double rate = state.spec.dropout_rates[l];
        Matrix mask;
        if (mode == Mode::train && rate > 0.0) {
            const double keep = 1.0 - rate;
            mask = Matrix(act.rows, act.cols);
            for (std::size_t i = 0; i < mask.data.size(); ++i) {
                mask.data[i] = rng.next_double() < keep ? 1.0 / keep : 0.0;
                act.data[i] *= mask.data[i];
            }
        }
        cache.pre.push_back(std::move(pre));
        cache.mask.push_back(std::move(mask));
        cache.act.push_back(act);
        current = std::move(act);
    }

    cache.embeddings = detail::dense_forward(current, state.layers[h]);
    cache.logits = detail::dense_forward(cache.embeddings, state.layers[h + 1]);
    return cache;
}

inline ForwardCache forward_eval(const NetworkState& state, const Matrix& input) {
    Rng unused(0);
    return forward(state, input, Mode::eval, unused);
}

struct NetworkGradients {
    std::vector<Matrix> w;
    std::vector<Vec> b;
};

inline NetworkGradients zero_gradients(const NetworkState& state) {
    NetworkGradients grads;
    for (const auto& layer : state.layers) {
        grads.w.emplace_back(layer.w.rows, layer.w.cols);
        grads.b.emplace_back(layer.b.size(), 0.0);
    }
    return grads;
}

/// Reverse-mode gradients for every weight and bias, combining the two
/// upstream flows: one into the embeddings, one into the logits. Either may
/// be empty (treated as zero).
inline NetworkGradients backward(const NetworkState& state, const ForwardCache& cache,
                                 const Matrix& grad_embeddings, const Matrix& grad_logits) {
    if (cache.revision != state.revision)
        throw ContractError("backward: cache is stale; rerun forward after parameter updates");

    const std::size_t h = state.num_hidden();
    const std::size_t n = cache.input.rows;
    NetworkGradients grads = zero_gradients(state);

    Matrix grad_emb(n, state.spec.embedding_dim);
    if (!grad_embeddings.empty()) {
        if (grad_embeddings.rows != n || grad_embeddings.cols != state.spec.embedding_dim)
            throw DimensionError("backward: grad_embeddings shape mismatch");
        grad_emb = grad_embeddings;
    }

    if (!grad_logits.empty()) {
        if (grad_logits.rows != n || grad_logits.cols != state.spec.num_classes)
            throw DimensionError("backward: grad_logits shape mismatch");
        const DenseLayer& cls = state.classifier();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < cls.w.cols; ++j) {
                const double g = grad_logits(i, j);
                grads.b[h + 1][j] += g;
                for (std::size_t r = 0; r < cls.w.rows; ++r) {
                    grads.w[h + 1](r, j) += cache.embeddings(i, r) * g;
                    grad_emb(i, r) += g * cls.w(r, j);
                }
            }
        }
    }

    // Embedding projection (linear).
    const Matrix& emb_input = h > 0 ? cache.act[h - 1] : cache.input;
    Matrix grad_act(n, emb_input.cols);
    {
        const DenseLayer& emb = state.layers[h];
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < emb.w.cols; ++j) {
                const double g = grad_emb(i, j);
                grads.b[h][j] += g;
                for (std::size_t r = 0; r < emb.w.rows; ++r) {
                    grads.w[h](r, j) += emb_input(i, r) * g;
                    grad_act(i, r) += g * emb.w(r, j);
                }
            }
        }
    }

    for (std::size_t l = h; l-- > 0;) {
        const Matrix& mask = cache.mask[l];
        const Matrix& pre = cache.pre[l];
        Matrix grad_pre(n, pre.cols);
        for (std::size_t i = 0; i < grad_pre.data.size(); ++i) {
            double g = grad_act.data[i];
            if (!mask.empty()) g *= mask.data[i];
            grad_pre.data[i] = g * detail::activate_grad(state.spec.activation, pre.data[i]);
        }

        const Matrix& layer_input = l > 0 ? cache.act[l - 1] : cache.input;
        const DenseLayer& layer = state.layers[l];
        Matrix grad_in(n, layer_input.cols);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < layer.w.cols; ++j) {
                const double g = grad_pre(i, j);
                grads.b[l][j] += g;
                for (std::size_t r = 0; r < layer.w.rows; ++r) {
                    grads.w[l](r, j) += layer_input(i, r) * g;
                    grad_in(i, r) += g * layer.w(r, j);
                }
            }
        }
        grad_act = std::move(grad_in);
    }
    return grads;
}

/// SGD with classical momentum: v <- momentum * v + g; p <- p - lr * v.
inline void sgd_step(NetworkState& state, const NetworkGradients& grads, double lr,
                     double momentum) {
    if (grads.w.size() != state.layers.size())
        throw DimensionError("sgd_step: gradient layer count mismatch");
    for (std::size_t l = 0; l < state.layers.size(); ++l) {
        DenseLayer& layer = state.layers[l];
        if (!grads.w[l].same_shape(layer.w) || grads.b[l].size() != layer.b.size())
            throw DimensionError("sgd_step: gradient shape mismatch at layer " + std::to_string(l));
        for (std::size_t i = 0; i < layer.w.data.size(); ++i) {
            layer.vw.data[i] = momentum * layer.vw.data[i] + grads.w[l].data[i];
            layer.w.data[i] -= lr * layer.vw.data[i];
        }
        for (std::size_t i = 0; i < layer.b.size(); ++i) {
            layer.vb[i] = momentum * layer.vb[i] + grads.b[l][i];
            layer.b[i] -= lr * layer.vb[i];
        }
    }
    ++state.revision;
}

enum class LossKind {
    softmax,
    softmax_daal,
    normalized_softmax,
    sphereface,
    cosface,
    arcface,
    softmax_center,
    triplet_center,
    triplet,
};

/// Knobs of the baseline training arms. The triplet and triplet-center
/// margins are distinct parameters even though both losses call theirs m.
struct BaselineParams {
    double margin = 0.35;          // margin softmax m
    double scale = 16.0;           // margin/normalized softmax s
    double center_alpha = 0.5;     // EMA rate for centers
    double center_lambda = 0.1;    // weight of the center term next to softmax
    double triplet_margin = 1.0;
    double triplet_center_margin = 1.0;
};

struct TrainConfig {
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::size_t batch_size = 64;
    std::size_t epochs = 30;
    std::uint64_t seed = 1;
    LossKind loss = LossKind::softmax;
    TotalLossWeights weights;
    DaalConfig daal;
    BaselineParams baseline;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be positive");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train config: momentum must be in [0, 1)");
        if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
        if (!std::isfinite(learning_rate) || !std::isfinite(momentum))
            throw ConfigError("train config: non-finite values");
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double total = 0.0;
    double softmax_part = 0.0;
    double daal_part = 0.0;
};

struct TrainResult {
    NetworkState state;
    LineSegmentSet segments;  // populated only by the DAAL arm
    CenterSet centers;        // populated only by center-based arms
    std::vector<EpochRecord> history;
};

namespace detail {

/// Deterministic triplets from a batch: for each anchor, the next same-class
/// row (cyclically) is the positive and the next other-class row the
/// negative. Anchors lacking either are skipped.
struct TripletIndex {
    std::size_t anchor, positive, negative;
};

inline std::vector<TripletIndex> build_triplets(const std::vector<int>& labels) {
    const std::size_t n = labels.size();
    std::vector<TripletIndex> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t pos = n, neg = n;
        for (std::size_t step = 1; step < n && (pos == n || neg == n); ++step) {
            const std::size_t j = (i + step) % n;
            if (labels[j] == labels[i]) {
                if (pos == n) pos = j;
            } else if (neg == n) {
                neg = j;
            }
        }
        if (pos != n && neg != n) out.push_back({i, pos, neg});
    }
    return out;
}

struct StepLoss {
    double total = 0.0;
    double softmax_part = 0.0;
    double daal_part = 0.0;
    Matrix grad_embeddings;  // upstream flow into embeddings, loss weights applied
    Matrix grad_logits;      // upstream flow into logits, loss weights applied
    Matrix cls_grad_w;       // direct classifier gradients from cosine losses
    Vec cls_grad_b;
};

inline ClassifierParams classifier_view(const NetworkState& state) {
    return ClassifierParams{state.classifier().w, state.classifier().b};
}

inline StepLoss step_loss(const NetworkState& state, const ForwardCache& fwd,
                          const std::vector<int>& labels, const TrainConfig& cfg,
                          const LineSegmentSet& segments, const CenterSet& centers) {
    StepLoss out;
    const EmbeddingBatch emb{fwd.embeddings, labels};
    switch (cfg.loss) {
        case LossKind::softmax: {
            auto [ce, grad] = cross_entropy_on_logits(fwd.logits, labels);
            out.softmax_part = ce;
            out.total = cfg.weights.lambda_s * ce;
            for (double& v : grad.data) v *= cfg.weights.lambda_s;
            out.grad_logits = std::move(grad);
            break;
        }
        case LossKind::softmax_daal: {
            auto [ce, grad] = cross_entropy_on_logits(fwd.logits, labels);
            LossResult dl = daal_loss(emb, segments, cfg.daal);
            out.softmax_part = ce;
            out.daal_part = dl.value;
            out.total = cfg.weights.lambda_s * ce + cfg.weights.lambda_daal * dl.value;
            for (double& v : grad.data) v *= cfg.weights.lambda_s;
            out.grad_logits = std::move(grad);
            for (double& v : dl.grad_embeddings.data) v *= cfg.weights.lambda_daal;
            out.grad_embeddings = std::move(dl.grad_embeddings);
            break;
        }
        case LossKind::normalized_softmax:
        case LossKind::sphereface:
        case LossKind::cosface:
        case LossKind::arcface: {
            LossResult lr;
            if (cfg.loss == LossKind::normalized_softmax) {
                lr = normalized_softmax_loss(classifier_view(state), emb, cfg.baseline.scale);
            } else {
                MarginSpec spec;
                spec.family = cfg.loss == LossKind::sphereface ? MarginFamily::multiplicative_angular
                              : cfg.loss == LossKind::cosface  ? MarginFamily::additive_cosine
                                                               : MarginFamily::additive_angular;
                spec.m = cfg.baseline.margin;
                spec.s = cfg.baseline.scale;
                lr = margin_softmax_loss(classifier_view(state), emb, spec);
            }
            out.softmax_part = lr.value;
            out.total = lr.value;
            out.grad_embeddings = std::move(lr.grad_embeddings);
            out.cls_grad_w = std::move(lr.grad_weights);
            out.cls_grad_b = std::move(lr.grad_biases);
            break;
        }
        case LossKind::softmax_center: {
            auto [ce, grad] = cross_entropy_on_logits(fwd.logits, labels);
            LossResult cl = center_loss(emb, centers);
            out.softmax_part = ce;
            out.total = ce + cfg.baseline.center_lambda * cl.value;
            out.grad_logits = std::move(grad);
            for (double& v : cl.grad_embeddings.data) v *= cfg.baseline.center_lambda;
            out.grad_embeddings = std::move(cl.grad_embeddings);
            break;
        }
        case LossKind::triplet_center: {
            LossResult lr = triplet_center_loss(emb, centers, cfg.baseline.triplet_center_margin);
            out.total = lr.value;
            out.grad_embeddings = std::move(lr.grad_embeddings);
            break;
        }
        case LossKind::triplet: {
            const auto triplets = build_triplets(labels);
            out.grad_embeddings = Matrix(fwd.embeddings.rows, fwd.embeddings.cols);
            if (!triplets.empty()) {
                const double inv_t = 1.0 / double(triplets.size());
                const std::size_t d = fwd.embeddings.cols;
                for (const auto& t : triplets) {
                    LossResult lr = triplet_loss(fwd.embeddings.row_vec(t.anchor),
                                                 fwd.embeddings.row_vec(t.positive),
                                                 fwd.embeddings.row_vec(t.negative),
                                                 cfg.baseline.triplet_margin);
                    out.total += inv_t * lr.value;
                    for (std::size_t r = 0; r < d; ++r) {
                        out.grad_embeddings(t.anchor, r) += inv_t * lr.grad_embeddings(0, r);
                        out.grad_embeddings(t.positive, r) += inv_t * lr.grad_embeddings(1, r);
                        out.grad_embeddings(t.negative, r) += inv_t * lr.grad_embeddings(2, r);
                    }
                }
            }
            break;
        }
    }
    return out;
}

inline bool uses_segments(LossKind kind) { return kind == LossKind::softmax_daal; }
inline bool uses_centers(LossKind kind) {
    return kind == LossKind::softmax_center || kind == LossKind::triplet_center;
}

}  // namespace detail

/// One training step order: evaluate losses against the current prototypes,
/// step the network, then refresh prototypes from the pre-step embeddings.
inline TrainResult train(const NetworkSpec& spec, const EmbeddingBatch& data,
                         const TrainConfig& cfg) {
    spec.validate();
    cfg.validate();
    if (data.size() == 0) throw DomainError("train: empty dataset");
    if (data.dim() != spec.input_dim) throw DimensionError("train: data width does not match input_dim");
    detail::check_batch(data, spec.num_classes);

    Rng base(cfg.seed);
    Rng init_rng = base.substream(1);
    Rng dropout_rng = base.substream(2);
    Rng shuffle_rng = base.substream(3);
    Rng segment_rng = base.substream(4);

    TrainResult result;
    result.state = init_network(spec, init_rng);
    if (detail::uses_segments(cfg.loss)) {
        cfg.daal.validate();
        result.segments = init_segments(spec.num_classes, spec.embedding_dim,
                                        cfg.daal.init_length, segment_rng);
    }
    if (detail::uses_centers(cfg.loss)) {
        result.centers = CenterSet{Matrix(spec.num_classes, spec.embedding_dim),
                                   cfg.baseline.center_alpha};
    }

    const std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_index(i)]);

        double sum_total = 0.0, sum_softmax = 0.0, sum_daal = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t b = std::min(cfg.batch_size, n - start);
            Matrix xb(b, spec.input_dim);
            std::vector<int> yb(b);
            for (std::size_t i = 0; i < b; ++i) {
                const std::size_t src = order[start + i];
                xb.set_row(i, data.features.row_vec(src));
                yb[i] = data.labels[src];
            }

            ForwardCache fwd = forward(result.state, xb, Mode::train, dropout_rng);
            detail::StepLoss sl =
                detail::step_loss(result.state, fwd, yb, cfg, result.segments, result.centers);
            if (!std::isfinite(sl.total))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));

            NetworkGradients grads = backward(result.state, fwd, sl.grad_embeddings, sl.grad_logits);
            if (!sl.cls_grad_w.empty()) {
                Matrix& gw = grads.w.back();
                for (std::size_t i = 0; i < gw.data.size(); ++i)
                    gw.data[i] += sl.cls_grad_w.data[i];
                for (std::size_t i = 0; i < sl.cls_grad_b.size(); ++i)
                    grads.b.back()[i] += sl.cls_grad_b[i];
            }
            sgd_step(result.state, grads, cfg.learning_rate, cfg.momentum);

            if (detail::uses_segments(cfg.loss)) {
                const EmbeddingBatch emb{fwd.embeddings, yb};
                BatchClassStats stats = batch_class_stats(emb, spec.num_classes);
                SegmentTargets targets = target_vertices(stats, result.segments, cfg.daal.eta);
                result.segments = ema_update(result.segments, targets, cfg.daal.tau);
            }
            if (detail::uses_centers(cfg.loss)) {
                result.centers = update_centers(result.centers, EmbeddingBatch{fwd.embeddings, yb});
            }

            sum_total += sl.total * double(b);
            sum_softmax += sl.softmax_part * double(b);
            sum_daal += sl.daal_part * double(b);
        }
        result.history.push_back(
            {epoch, sum_total / double(n), sum_softmax / double(n), sum_daal / double(n)});
    }
    return result;
}

}  // namespace daal
