#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "numerics.hpp"

namespace daal {

/// A batch of embeddings (one row per sample) with aligned integer labels.
struct EmbeddingBatch {
    Matrix features;          // N x d
    std::vector<int> labels;  // length N

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols; }
};

/// Final fully connected layer seen as per-class weight columns plus biases.
struct ClassifierParams {
    Matrix weights;  // d x C, column j holds the weight vector of class j
    Vec biases;      // length C

    std::size_t dim() const { return weights.rows; }
    std::size_t num_classes() const { return weights.cols; }
};

enum class MarginFamily {
    multiplicative_angular,  // cos(m * theta), integer m >= 1
    additive_cosine,         // cos(theta) - m, m >= 0
    additive_angular,        // cos(theta + m), m >= 0
};

struct MarginSpec {
    MarginFamily family = MarginFamily::additive_cosine;
    double m = 0.35;
    double s = 16.0;

    void validate() const {
        if (s <= 0.0) throw ConfigError("margin spec: scale must be positive");
        if (family == MarginFamily::multiplicative_angular) {
            if (m < 1.0 || m != std::floor(m))
                throw ConfigError("margin spec: multiplicative-angular margin must be an integer >= 1");
        } else if (m < 0.0) {
            throw ConfigError("margin spec: additive margin must be non-negative");
        }
    }
};

/// One learned center per class, refreshed by an EMA over batch means.
struct CenterSet {
    Matrix centers;      // C x d
    double alpha = 0.5;  // EMA rate used by update_centers

    std::size_t num_classes() const { return centers.rows; }
    std::size_t dim() const { return centers.cols; }
};

/// Loss value plus analytic gradients. Gradient blocks a loss does not own
/// stay empty; present blocks match their parameter shapes exactly.
struct LossResult {
    double value = 0.0;
    Matrix grad_embeddings;  // N x d (for triplet_loss: rows anchor, positive, negative)
    Matrix grad_weights;     // d x C when the loss owns classifier weights
    Vec grad_biases;         // length C alongside grad_weights
    Matrix grad_centers;     // C x d for center-based losses
};

namespace detail {

inline void check_batch(const EmbeddingBatch& batch, std::size_t num_classes) {
    if (batch.size() == 0) throw DomainError("loss: empty batch");
    if (batch.features.rows != batch.labels.size())
        throw DimensionError("loss: feature rows do not match label count");
    for (std::size_t i = 0; i < batch.labels.size(); ++i) {
        const int y = batch.labels[i];
        if (y < 0 || std::size_t(y) >= num_classes)
            throw DomainError("loss: label " + std::to_string(y) + " out of range at row " +
                              std::to_string(i));
    }
}

inline void check_params(const ClassifierParams& params, const EmbeddingBatch& batch) {
    if (params.num_classes() < 2) throw ConfigError("loss: need at least two classes");
    if (params.weights.rows != batch.dim())
        throw DimensionError("loss: weight rows do not match embedding dimension");
    if (params.biases.size() != params.num_classes())
        throw DimensionError("loss: bias length does not match class count");
}

// arccos gradients blow up at the interval ends; the cosine is clamped before
// the angle is taken, which zeroes the derivative outside the clamp window.
constexpr double kCosClamp = 1e-7;

inline double clamped_cos(double c) {
    return std::clamp(c, -1.0 + kCosClamp, 1.0 - kCosClamp);
}

/// Margin transform value and its derivative w.r.t. the raw cosine.
inline std::pair<double, double> margin_transform(const MarginSpec& spec, double c) {
    switch (spec.family) {
        case MarginFamily::additive_cosine:
            return {c - spec.m, 1.0};
        case MarginFamily::multiplicative_angular: {
            const bool clamped = c <= -1.0 + kCosClamp || c >= 1.0 - kCosClamp;
            const double cc = clamped_cos(c);
            const double theta = std::acos(cc);
            const double sin_theta = std::sqrt(1.0 - cc * cc);
            const double value = std::cos(spec.m * theta);
            const double grad = clamped ? 0.0 : spec.m * std::sin(spec.m * theta) / sin_theta;
            return {value, grad};
        }
        case MarginFamily::additive_angular: {
            const bool clamped = c <= -1.0 + kCosClamp || c >= 1.0 - kCosClamp;
            const double cc = clamped_cos(c);
            const double theta = std::acos(cc);
            const double sin_theta = std::sqrt(1.0 - cc * cc);
            const double value = std::cos(theta + spec.m);
            const double grad = clamped ? 0.0 : std::sin(theta + spec.m) / sin_theta;
            return {value, grad};
        }
    }
    throw ConfigError("margin spec: unknown family");
}

/// Shared body of the normalized and margin softmax losses. Both place the
/// normalized weights and embeddings on the unit sphere and scale the cosine
/// logits by s; the margin variant additionally transforms the target logit.
inline LossResult cosine_softmax(const ClassifierParams& params, const EmbeddingBatch& batch,
                                 double s, const MarginSpec* margin) {
    const std::size_t n = batch.size();
    const std::size_t d = batch.dim();
    const std::size_t c = params.num_classes();
    check_batch(batch, c);
    check_params(params, batch);
    if (s <= 0.0) throw ConfigError("loss: scale must be positive");

    std::vector<double> w_norm(c);
    Matrix w_hat(d, c);
    for (std::size_t j = 0; j < c; ++j) {
        double acc = 0.0;
        for (std::size_t r = 0; r < d; ++r) acc += params.weights(r, j) * params.weights(r, j);
        w_norm[j] = std::sqrt(acc);
        if (w_norm[j] <= 1e-12)
            throw DegenerateVectorError("loss: weight column " + std::to_string(j) +
                                        " has near-zero norm");
        for (std::size_t r = 0; r < d; ++r) w_hat(r, j) = params.weights(r, j) / w_norm[j];
    }

    LossResult out;
    out.grad_embeddings = Matrix(n, d);
    out.grad_weights = Matrix(d, c);
    out.grad_biases = Vec(c, 0.0);  // biases take no part in the cosine losses

    const double inv_n = 1.0 / double(n);
    std::vector<double> cosines(c), logits(c), probs(c);
    Vec x_hat(d);
    double loss = 0.0;

    for (std::size_t i = 0; i < n; ++i) {
        const double* x = batch.features.row(i);
        const int y = batch.labels[i];
        double xn = 0.0;
        for (std::size_t r = 0; r < d; ++r) xn += x[r] * x[r];
        xn = std::sqrt(xn);
        if (xn <= 1e-12)
            throw DegenerateVectorError("loss: embedding row " + std::to_string(i) +
                                        " has near-zero norm");
        for (std::size_t r = 0; r < d; ++r) x_hat[r] = x[r] / xn;

        for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t r = 0; r < d; ++r) acc += w_hat(r, j) * x_hat[r];
            cosines[j] = acc;
            logits[j] = s * acc;
        }
        double target_slope = s;  // d(logit_y)/d(cos_y)
        if (margin != nullptr) {
            const auto [g, dg] = margin_transform(*margin, cosines[std::size_t(y)]);
            logits[std::size_t(y)] = s * g;
            target_slope = s * dg;
        }

        const double mx = *std::max_element(logits.begin(), logits.end());
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            probs[j] = std::exp(logits[j] - mx);
            denom += probs[j];
        }
        loss -= logits[std::size_t(y)] - mx - std::log(denom);

        for (std::size_t j = 0; j < c; ++j) {
            const double q = probs[j] / denom - (int(j) == y ? 1.0 : 0.0);
            const double coef = inv_n * q * (int(j) == y ? target_slope : s);
            // d(cos_j)/dx = (w_hat_j - cos_j * x_hat) / |x|
            // d(cos_j)/dw_j = (x_hat - cos_j * w_hat_j) / |w_j|
            for (std::size_t r = 0; r < d; ++r) {
                out.grad_embeddings(i, r) += coef * (w_hat(r, j) - cosines[j] * x_hat[r]) / xn;
                out.grad_weights(r, j) += coef * (x_hat[r] - cosines[j] * w_hat(r, j)) / w_norm[j];
            }
        }
    }
    out.value = loss * inv_n;
    return out;
}

}  // namespace detail

/// Plain softmax cross-entropy over logits W^T x + b, averaged over the batch.
inline LossResult softmax_loss(const ClassifierParams& params, const EmbeddingBatch& batch) {
    const std::size_t n = batch.size();
    if (n == 0) throw DomainError("softmax_loss: empty batch");
    const std::size_t d = batch.dim();
    const std::size_t c = params.num_classes();
    detail::check_batch(batch, c);
    detail::check_params(params, batch);

    LossResult out;
    out.grad_embeddings = Matrix(n, d);
    out.grad_weights = Matrix(d, c);
    out.grad_biases = Vec(c, 0.0);

    const double inv_n = 1.0 / double(n);
    std::vector<double> logits(c), probs(c);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = batch.features.row(i);
        const int y = batch.labels[i];
        for (std::size_t j = 0; j < c; ++j) {
            double acc = params.biases[j];
            for (std::size_t r = 0; r < d; ++r) acc += params.weights(r, j) * x[r];
            logits[j] = acc;
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            probs[j] = std::exp(logits[j] - mx);
            denom += probs[j];
        }
        loss -= logits[std::size_t(y)] - mx - std::log(denom);

        for (std::size_t j = 0; j < c; ++j) {
            const double g = inv_n * (probs[j] / denom - (int(j) == y ? 1.0 : 0.0));
            out.grad_biases[j] += g;
            for (std::size_t r = 0; r < d; ++r) {
                out.grad_embeddings(i, r) += g * params.weights(r, j);
                out.grad_weights(r, j) += g * x[r];
            }
        }
    }
    out.value = loss * inv_n;
    return out;
}

/// Cross-entropy over precomputed logits. Same math as softmax_loss with the
/// classifier folded into the logits; used by the trainer.
inline std::pair<double, Matrix> cross_entropy_on_logits(const Matrix& logits,
                                                         const std::vector<int>& labels) {
    const std::size_t n = logits.rows;
    const std::size_t c = logits.cols;
    if (n == 0) throw DomainError("cross_entropy_on_logits: empty batch");
    if (labels.size() != n) throw DimensionError("cross_entropy_on_logits: label count mismatch");

    Matrix grad(n, c);
    const double inv_n = 1.0 / double(n);
    double loss = 0.0;
    std::vector<double> probs(c);
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || std::size_t(y) >= c)
            throw DomainError("cross_entropy_on_logits: label out of range");
        const double* z = logits.row(i);
        const double mx = *std::max_element(z, z + c);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            probs[j] = std::exp(z[j] - mx);
            denom += probs[j];
        }
        loss -= z[std::size_t(y)] - mx - std::log(denom);
        for (std::size_t j = 0; j < c; ++j)
            grad(i, j) = inv_n * (probs[j] / denom - (int(j) == y ? 1.0 : 0.0));
    }
    return {loss * inv_n, std::move(grad)};
}

/// Softmax over scaled cosine similarities between unit embeddings and unit
/// weight columns.
inline LossResult normalized_softmax_loss(const ClassifierParams& params,
                                          const EmbeddingBatch& batch, double s) {
    return detail::cosine_softmax(params, batch, s, nullptr);
}

/// Family-dispatched margin transform at a given angle.
inline double margin_function(const MarginSpec& spec, double theta) {
    spec.validate();
    if (theta < 0.0 || theta > 3.14159265358979323846 + 1e-12)
        throw DomainError("margin_function: angle outside [0, pi]");
    switch (spec.family) {
        case MarginFamily::multiplicative_angular:
            return std::cos(spec.m * theta);
        case MarginFamily::additive_cosine:
            return std::cos(theta) - spec.m;
        case MarginFamily::additive_angular:
            return std::cos(theta + spec.m);
    }
    throw ConfigError("margin_function: unknown family");
}

/// Margin softmax: the target logit becomes s * g(m, theta_y), all other
/// logits stay s * cos(theta_j), followed by cross-entropy.
inline LossResult margin_softmax_loss(const ClassifierParams& params, const EmbeddingBatch& batch,
                                      const MarginSpec& spec) {
    spec.validate();
    return detail::cosine_softmax(params, batch, spec.s, &spec);
}

/// Hinge over squared Euclidean distances of an (anchor, positive, negative)
/// triple. grad_embeddings rows follow the argument order.
inline LossResult triplet_loss(const Vec& anchor, const Vec& positive, const Vec& negative,
                               double m) {
    const std::size_t d = anchor.size();
    if (positive.size() != d || negative.size() != d)
        throw DimensionError("triplet_loss: dimension mismatch");
    if (m < 0.0) throw DomainError("triplet_loss: margin must be non-negative");

    const double d_pos = squared_distance(anchor.data(), positive.data(), d);
    const double d_neg = squared_distance(anchor.data(), negative.data(), d);
    const double active = m + d_pos - d_neg;

    LossResult out;
    out.grad_embeddings = Matrix(3, d);
    if (active > 0.0) {
        out.value = active;
        for (std::size_t r = 0; r < d; ++r) {
            out.grad_embeddings(0, r) = 2.0 * (negative[r] - positive[r]);
            out.grad_embeddings(1, r) = -2.0 * (anchor[r] - positive[r]);
            out.grad_embeddings(2, r) = 2.0 * (anchor[r] - negative[r]);
        }
    }
    return out;
}

/// Half the summed squared distance of each embedding to its class center.
inline LossResult center_loss(const EmbeddingBatch& batch, const CenterSet& centers) {
    const std::size_t n = batch.size();
    const std::size_t d = batch.dim();
    detail::check_batch(batch, centers.num_classes());
    if (centers.dim() != d) throw DimensionError("center_loss: center dimension mismatch");

    LossResult out;
    out.grad_embeddings = Matrix(n, d);
    out.grad_centers = Matrix(centers.num_classes(), d);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = batch.features.row(i);
        const double* ck = centers.centers.row(std::size_t(batch.labels[i]));
        for (std::size_t r = 0; r < d; ++r) {
            const double diff = x[r] - ck[r];
            loss += 0.5 * diff * diff;
            out.grad_embeddings(i, r) = diff;
            out.grad_centers(std::size_t(batch.labels[i]), r) -= diff;
        }
    }
    out.value = loss;
    return out;
}

/// EMA of batch class means: c_k <- (1 - alpha) c_k + alpha * mean_k.
/// Classes absent from the batch keep their centers.
inline CenterSet update_centers(const CenterSet& centers, const EmbeddingBatch& batch) {
    const std::size_t d = centers.dim();
    if (batch.dim() != d) throw DimensionError("update_centers: dimension mismatch");
    detail::check_batch(batch, centers.num_classes());

    CenterSet out = centers;
    std::vector<std::size_t> count(centers.num_classes(), 0);
    Matrix sum(centers.num_classes(), d);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::size_t k = std::size_t(batch.labels[i]);
        ++count[k];
        const double* x = batch.features.row(i);
        for (std::size_t r = 0; r < d; ++r) sum(k, r) += x[r];
    }
    for (std::size_t k = 0; k < centers.num_classes(); ++k) {
        if (count[k] == 0) continue;
        for (std::size_t r = 0; r < d; ++r) {
            const double mean = sum(k, r) / double(count[k]);
            out.centers(k, r) = (1.0 - centers.alpha) * centers.centers(k, r) +
                                centers.alpha * mean;
        }
    }
    return out;
}

/// Triplet-center hinge with D(f, c) = |f - c|^2 / 2. The nearest wrong
/// center breaks ties toward the lowest class index.
inline LossResult triplet_center_loss(const EmbeddingBatch& batch, const CenterSet& centers,
                                      double m) {
    const std::size_t c = centers.num_classes();
    if (c < 2) throw ConfigError("triplet_center_loss: need at least two classes");
    const std::size_t n = batch.size();
    const std::size_t d = batch.dim();
    detail::check_batch(batch, c);
    if (centers.dim() != d) throw DimensionError("triplet_center_loss: center dimension mismatch");

    LossResult out;
    out.grad_embeddings = Matrix(n, d);
    out.grad_centers = Matrix(c, d);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* f = batch.features.row(i);
        const std::size_t y = std::size_t(batch.labels[i]);
        const double d_own = 0.5 * squared_distance(f, centers.centers.row(y), d);
        double d_min = 0.0;
        std::size_t j_min = c;
        for (std::size_t j = 0; j < c; ++j) {
            if (j == y) continue;
            const double dj = 0.5 * squared_distance(f, centers.centers.row(j), d);
            if (j_min == c || dj < d_min) {
                d_min = dj;
                j_min = j;
            }
        }
        const double active = d_own + m - d_min;
        if (active > 0.0) {
            loss += active;
            const double* c_own = centers.centers.row(y);
            const double* c_near = centers.centers.row(j_min);
            for (std::size_t r = 0; r < d; ++r) {
                out.grad_embeddings(i, r) = c_near[r] - c_own[r];
                out.grad_centers(y, r) -= f[r] - c_own[r];
                out.grad_centers(j_min, r) += f[r] - c_near[r];
            }
        }
    }
    out.value = loss;
    return out;
}

}  // namespace daal
