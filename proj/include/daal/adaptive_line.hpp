#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "losses.hpp"
#include "numerics.hpp"

namespace daal {

/// Per-class line-segment prototypes: inner vertex A, outer vertex B and the
/// current unit direction. A degenerate segment (A == B) behaves as a point;
/// v_hat then keeps its last non-degenerate value.
struct LineSegmentSet {
    std::size_t dim = 0;
    std::vector<Vec> a;      // inner vertices
    std::vector<Vec> b;      // outer vertices
    std::vector<Vec> v_hat;  // unit directions

    std::size_t num_classes() const { return a.size(); }
    bool empty() const { return a.empty(); }
};

enum class IntraMode {
    nearest_vertex,  // squared min distance to the two vertices
    segment,         // squared distance to the closest point on the segment
};

struct DaalConfig {
    double delta = 1.5;         // inter-class margin
    double tau = 0.001;         // EMA factor for vertex updates
    double eta = 5.0;           // variance factor scaling segment length
    double lambda_inter = 1.0;  // weight on the inter term
    double init_length = 1.0;   // initial segment length L
    IntraMode intra_mode = IntraMode::segment;

    void validate() const {
        if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("daal config: tau must be in (0, 1]");
        if (eta < 0.0) throw ConfigError("daal config: eta must be non-negative");
        if (delta < 0.0) throw ConfigError("daal config: delta must be non-negative");
        if (lambda_inter < 0.0) throw ConfigError("daal config: lambda_inter must be non-negative");
        if (init_length <= 0.0) throw ConfigError("daal config: init_length must be positive");
    }
};

/// Per-class batch statistics: centroid, scalar variance (mean squared
/// distance to the centroid, population form) and sample count.
struct BatchClassStats {
    std::vector<std::size_t> count;
    std::vector<Vec> centroid;      // empty for absent classes
    std::vector<double> variance;   // sigma^2, zero when count <= 1

    std::size_t num_classes() const { return count.size(); }
};

/// Per-class EMA targets produced from batch statistics. Classes absent from
/// the batch carry no target.
struct SegmentTargets {
    std::vector<std::uint8_t> valid;
    std::vector<Vec> a;
    std::vector<Vec> b;
};

struct TotalLossWeights {
    double lambda_s = 1.0;
    double lambda_daal = 0.01;
};

struct SegmentPoint {
    double distance = 0.0;
    double t = 0.0;  // parameter of the closest point, clamped to [0, 1]
};

/// Segments start at a random point, pointing along a random unit direction,
/// with fixed length L. Per class the draw order is A first, then the
/// direction.
inline LineSegmentSet init_segments(std::size_t num_classes, std::size_t dim, double length,
                                    Rng& rng) {
    if (num_classes < 1 || dim < 1) throw ConfigError("init_segments: need classes and dim >= 1");
    if (length <= 0.0) throw ConfigError("init_segments: length must be positive");

    LineSegmentSet set;
    set.dim = dim;
    set.a.resize(num_classes);
    set.b.resize(num_classes);
    set.v_hat.resize(num_classes);
    for (std::size_t k = 0; k < num_classes; ++k) {
        set.a[k] = sample_standard_normal(rng, dim);
        set.v_hat[k] = normalize(sample_standard_normal(rng, dim));
        set.b[k].resize(dim);
        for (std::size_t r = 0; r < dim; ++r)
            set.b[k][r] = set.a[k][r] + length * set.v_hat[k][r];
    }
    return set;
}

/// Class centroids and scalar variances of a batch. num_classes == 0 infers
/// the class count from the largest label.
inline BatchClassStats batch_class_stats(const EmbeddingBatch& batch,
                                         std::size_t num_classes = 0) {
    if (batch.features.rows != batch.labels.size())
        throw DimensionError("batch_class_stats: feature rows do not match label count");
    std::size_t c = num_classes;
    if (c == 0) {
        for (int y : batch.labels) {
            if (y < 0) throw DomainError("batch_class_stats: negative label");
            c = std::max(c, std::size_t(y) + 1);
        }
    }
    const std::size_t d = batch.dim();

    BatchClassStats stats;
    stats.count.assign(c, 0);
    stats.centroid.assign(c, Vec());
    stats.variance.assign(c, 0.0);

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const int y = batch.labels[i];
        if (y < 0 || std::size_t(y) >= c)
            throw DomainError("batch_class_stats: label out of range");
        const std::size_t k = std::size_t(y);
        if (stats.count[k] == 0) stats.centroid[k].assign(d, 0.0);
        ++stats.count[k];
        const double* x = batch.features.row(i);
        for (std::size_t r = 0; r < d; ++r) stats.centroid[k][r] += x[r];
    }
    for (std::size_t k = 0; k < c; ++k) {
        if (stats.count[k] == 0) continue;
        for (std::size_t r = 0; r < d; ++r) stats.centroid[k][r] /= double(stats.count[k]);
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::size_t k = std::size_t(batch.labels[i]);
        stats.variance[k] +=
            squared_distance(batch.features.row(i), stats.centroid[k].data(), d);
    }
    for (std::size_t k = 0; k < c; ++k) {
        if (stats.count[k] <= 1)
            stats.variance[k] = 0.0;
        else
            stats.variance[k] /= double(stats.count[k]);
    }
    return stats;
}

/// Target vertices symmetric about the centroid along the current segment
/// direction: A* = c - eta * sigma * v, B* = c + eta * sigma * v. The
/// direction comes from the live segment, falling back to the stored v_hat
/// when the segment has collapsed.
inline SegmentTargets target_vertices(const BatchClassStats& stats, const LineSegmentSet& segments,
                                      double eta) {
    if (stats.num_classes() != segments.num_classes())
        throw DimensionError("target_vertices: class count mismatch");
    const std::size_t d = segments.dim;

    SegmentTargets targets;
    targets.valid.assign(segments.num_classes(), 0);
    targets.a.resize(segments.num_classes());
    targets.b.resize(segments.num_classes());
    for (std::size_t k = 0; k < segments.num_classes(); ++k) {
        if (stats.count[k] == 0) continue;
        Vec dir(d);
        double norm = 0.0;
        for (std::size_t r = 0; r < d; ++r) {
            dir[r] = segments.b[k][r] - segments.a[k][r];
            norm += dir[r] * dir[r];
        }
        norm = std::sqrt(norm);
        if (norm < 1e-9) {
            dir = segments.v_hat[k];
        } else {
            for (std::size_t r = 0; r < d; ++r) dir[r] /= norm;
        }
        const double half = eta * std::sqrt(stats.variance[k]);
        targets.valid[k] = 1;
        targets.a[k].resize(d);
        targets.b[k].resize(d);
        for (std::size_t r = 0; r < d; ++r) {
            targets.a[k][r] = stats.centroid[k][r] - half * dir[r];
            targets.b[k][r] = stats.centroid[k][r] + half * dir[r];
        }
    }
    return targets;
}

namespace detail {

/// Distance of e to segment [a, b]; writes the closest point when asked.
inline SegmentPoint project_to_segment(const double* e, const double* a, const double* b,
                                       std::size_t d, double* closest = nullptr) {
    double len_sq = 0.0, along = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
        const double u = b[r] - a[r];
        len_sq += u * u;
        along += (e[r] - a[r]) * u;
    }
    SegmentPoint result;
    if (len_sq == 0.0) {
        result.t = 0.0;
    } else {
        result.t = std::clamp(along / len_sq, 0.0, 1.0);
    }
    double dist_sq = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
        const double p = a[r] + result.t * (b[r] - a[r]);
        const double diff = e[r] - p;
        dist_sq += diff * diff;
        if (closest != nullptr) closest[r] = p;
    }
    result.distance = std::sqrt(dist_sq);
    return result;
}

}  // namespace detail

/// Distance from a point to the closed segment [A, B] plus the clamped
/// projection parameter. A == B degenerates to point distance with t = 0.
inline SegmentPoint point_segment_distance(const Vec& e, const Vec& a, const Vec& b) {
    if (e.size() != a.size() || e.size() != b.size())
        throw DimensionError("point_segment_distance: dimension mismatch");
    return detail::project_to_segment(e.data(), a.data(), b.data(), e.size());
}

/// Intra-class pull toward the own-class prototype, averaged over the batch.
/// Vertices are treated as constants; only embeddings receive gradients.
inline LossResult intra_loss(const EmbeddingBatch& batch, const LineSegmentSet& segments,
                             IntraMode mode) {
    const std::size_t n = batch.size();
    const std::size_t d = batch.dim();
    detail::check_batch(batch, segments.num_classes());
    if (segments.dim != d) throw DimensionError("intra_loss: segment dimension mismatch");

    LossResult out;
    out.grad_embeddings = Matrix(n, d);
    const double inv_n = 1.0 / double(n);
    Vec closest(d);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* e = batch.features.row(i);
        const std::size_t y = std::size_t(batch.labels[i]);
        if (mode == IntraMode::segment) {
            const auto proj =
                detail::project_to_segment(e, segments.a[y].data(), segments.b[y].data(), d,
                                           closest.data());
            loss += proj.distance * proj.distance;
            for (std::size_t r = 0; r < d; ++r)
                out.grad_embeddings(i, r) = 2.0 * inv_n * (e[r] - closest[r]);
        } else {
            const double da = squared_distance(e, segments.a[y].data(), d);
            const double db = squared_distance(e, segments.b[y].data(), d);
            const Vec& vertex = da <= db ? segments.a[y] : segments.b[y];  // ties go to A
            loss += std::min(da, db);
            for (std::size_t r = 0; r < d; ++r)
                out.grad_embeddings(i, r) = 2.0 * inv_n * (e[r] - vertex[r]);
        }
    }
    out.value = loss * inv_n;
    return out;
}

/// Margin hinge against the nearest wrong-class segment, averaged over the
/// batch. The inner min breaks ties toward the lowest class index.
inline LossResult inter_loss(const EmbeddingBatch& batch, const LineSegmentSet& segments,
                             double delta) {
    const std::size_t c = segments.num_classes();
    if (c < 2) throw ConfigError("inter_loss: need at least two classes");
    const std::size_t n = batch.size();
    const std::size_t d = batch.dim();
    detail::check_batch(batch, c);
    if (segments.dim != d) throw DimensionError("inter_loss: segment dimension mismatch");

    LossResult out;
    out.grad_embeddings = Matrix(n, d);
    const double inv_n = 1.0 / double(n);
    Vec closest(d), best_closest(d);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* e = batch.features.row(i);
        const int y = batch.labels[i];
        double d_min = 0.0;
        std::size_t j_min = c;
        for (std::size_t j = 0; j < c; ++j) {
            if (int(j) == y) continue;
            const auto proj = detail::project_to_segment(e, segments.a[j].data(),
                                                         segments.b[j].data(), d, closest.data());
            if (j_min == c || proj.distance < d_min) {
                d_min = proj.distance;
                j_min = j;
                best_closest = closest;
            }
        }
        const double active = delta - d_min;
        if (active > 0.0) {
            loss += active;
            if (d_min > 1e-12) {
                for (std::size_t r = 0; r < d; ++r)
                    out.grad_embeddings(i, r) = -inv_n * (e[r] - best_closest[r]) / d_min;
            }
            // d_min == 0: the embedding sits on a wrong segment, where the
            // distance is not differentiable; subgradient 0.
        }
    }
    out.value = loss * inv_n;
    return out;
}

/// Combined prototype loss: intra + lambda_inter * inter.
inline LossResult daal_loss(const EmbeddingBatch& batch, const LineSegmentSet& segments,
                            const DaalConfig& cfg) {
    cfg.validate();
    LossResult intra = intra_loss(batch, segments, cfg.intra_mode);
    LossResult inter = inter_loss(batch, segments, cfg.delta);
    LossResult out;
    out.value = intra.value + cfg.lambda_inter * inter.value;
    out.grad_embeddings = std::move(intra.grad_embeddings);
    for (std::size_t i = 0; i < out.grad_embeddings.data.size(); ++i)
        out.grad_embeddings.data[i] += cfg.lambda_inter * inter.grad_embeddings.data[i];
    return out;
}

/// Vertices drift toward their targets: A <- tau * A_target + (1 - tau) * A.
/// Classes without targets stay put. The direction is refreshed from the
/// updated vertices when the segment is non-degenerate.
inline LineSegmentSet ema_update(const LineSegmentSet& segments, const SegmentTargets& targets,
                                 double tau) {
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("ema_update: tau must be in (0, 1]");
    if (targets.valid.size() != segments.num_classes())
        throw DimensionError("ema_update: target class count mismatch");

    LineSegmentSet out = segments;
    for (std::size_t k = 0; k < segments.num_classes(); ++k) {
        if (!targets.valid[k]) continue;
        for (std::size_t r = 0; r < segments.dim; ++r) {
            out.a[k][r] = tau * targets.a[k][r] + (1.0 - tau) * segments.a[k][r];
            out.b[k][r] = tau * targets.b[k][r] + (1.0 - tau) * segments.b[k][r];
        }
        Vec dir(segments.dim);
        double norm = 0.0;
        for (std::size_t r = 0; r < segments.dim; ++r) {
            dir[r] = out.b[k][r] - out.a[k][r];
            norm += dir[r] * dir[r];
        }
        norm = std::sqrt(norm);
        if (norm >= 1e-9) {
            for (std::size_t r = 0; r < segments.dim; ++r) out.v_hat[k][r] = dir[r] / norm;
        }
    }
    return out;
}

/// Weighted combination of a classification loss and the prototype loss,
/// with gradients combined under the same weights.
inline LossResult total_loss(const LossResult& softmax_part, const LossResult& daal_part,
                             const TotalLossWeights& w) {
    if (w.lambda_s < 0.0 || w.lambda_daal < 0.0)
        throw ConfigError("total_loss: weights must be non-negative");

    auto combine = [](const Matrix& x, const Matrix& y, double wx, double wy,
                      const char* what) -> Matrix {
        if (x.empty() && y.empty()) return Matrix();
        if (y.empty()) {
            Matrix out = x;
            for (double& v : out.data) v *= wx;
            return out;
        }
        if (x.empty()) {
            Matrix out = y;
            for (double& v : out.data) v *= wy;
            return out;
        }
        if (!x.same_shape(y)) throw DimensionError(std::string("total_loss: shape mismatch in ") + what);
        Matrix out = x;
        for (std::size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = wx * x.data[i] + wy * y.data[i];
        return out;
    };

    LossResult out;
    out.value = w.lambda_s * softmax_part.value + w.lambda_daal * daal_part.value;
    out.grad_embeddings = combine(softmax_part.grad_embeddings, daal_part.grad_embeddings,
                                  w.lambda_s, w.lambda_daal, "grad_embeddings");
    out.grad_weights = combine(softmax_part.grad_weights, daal_part.grad_weights, w.lambda_s,
                               w.lambda_daal, "grad_weights");
    out.grad_centers = combine(softmax_part.grad_centers, daal_part.grad_centers, w.lambda_s,
                               w.lambda_daal, "grad_centers");
    if (!softmax_part.grad_biases.empty() || !daal_part.grad_biases.empty()) {
        const Vec& x = softmax_part.grad_biases;
        const Vec& y = daal_part.grad_biases;
        if (!x.empty() && !y.empty() && x.size() != y.size())
            throw DimensionError("total_loss: shape mismatch in grad_biases");
        out.grad_biases.assign(std::max(x.size(), y.size()), 0.0);
        for (std::size_t i = 0; i < x.size(); ++i) out.grad_biases[i] += w.lambda_s * x[i];
        for (std::size_t i = 0; i < y.size(); ++i) out.grad_biases[i] += w.lambda_daal * y[i];
    }
    return out;
}

}  // namespace daal
