#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "adaptive_line.hpp"
#include "losses.hpp"
#include "numerics.hpp"

namespace daal {

struct GradCheckReport {
    std::string loss;
    std::size_t points = 0;
    double max_rel_err = 0.0;
    bool pass = false;
};

namespace gradcheck_detail {

/// Relative error between an analytic gradient and central finite
/// differences at one evaluation point:
///   max_i |a_i - fd_i| / max(1, max_i |a_i|, max_i |fd_i|).
inline double compare_grad(const std::function<double(const Vec&)>& f, const Vec& x0,
                           const Vec& analytic, double h) {
    Vec x = x0;
    double max_diff = 0.0, scale = 1.0;
    for (std::size_t i = 0; i < x0.size(); ++i) {
        x[i] = x0[i] + h;
        const double fp = f(x);
        x[i] = x0[i] - h;
        const double fm = f(x);
        x[i] = x0[i];
        const double fd = (fp - fm) / (2.0 * h);
        max_diff = std::max(max_diff, std::abs(analytic[i] - fd));
        scale = std::max({scale, std::abs(analytic[i]), std::abs(fd)});
    }
    return max_diff / scale;
}

struct Instance {
    Vec x0;
    std::function<double(const Vec&)> f;
    Vec analytic;
};

// Shared desk-scale instance shape.
constexpr std::size_t kN = 4, kC = 3, kD = 5;

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = scale * rng.next_gaussian();
    return m;
}

inline std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t c) {
    std::vector<int> labels(n);
    for (auto& y : labels) y = int(rng.next_index(c));
    return labels;
}

inline Vec concat(std::initializer_list<const std::vector<double>*> parts) {
    Vec out;
    for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
    return out;
}

inline bool cosines_tame(const ClassifierParams& params, const EmbeddingBatch& batch) {
    const std::size_t d = batch.dim();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Vec x = batch.features.row_vec(i);
        const double xn = l2_norm(x);
        if (xn < 0.3) return false;
        for (std::size_t j = 0; j < params.num_classes(); ++j) {
            Vec w(d);
            for (std::size_t r = 0; r < d; ++r) w[r] = params.weights(r, j);
            const double wn = l2_norm(w);
            if (wn < 0.3) return false;
            const double c = dot(x, w) / (xn * wn);
            if (std::abs(c) > 0.95) return false;
        }
    }
    return true;
}

inline LineSegmentSet random_segments(Rng& rng, std::size_t c, std::size_t d) {
    LineSegmentSet set;
    set.dim = d;
    set.a.resize(c);
    set.b.resize(c);
    set.v_hat.resize(c);
    for (std::size_t k = 0; k < c; ++k) {
        set.a[k] = sample_standard_normal(rng, d);
        for (double& v : set.a[k]) v *= 0.8;
        set.v_hat[k] = normalize(sample_standard_normal(rng, d));
        const double len = 1.0 + rng.next_double();
        set.b[k].resize(d);
        for (std::size_t r = 0; r < d; ++r) set.b[k][r] = set.a[k][r] + len * set.v_hat[k][r];
    }
    return set;
}

/// Embeddings scattered around their own class segment so that both clamped
/// and interior projections occur.
inline EmbeddingBatch embeddings_near_segments(Rng& rng, const LineSegmentSet& segs,
                                               std::size_t n) {
    const std::size_t d = segs.dim;
    EmbeddingBatch batch;
    batch.features = Matrix(n, d);
    batch.labels = random_labels(rng, n, segs.num_classes());
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = std::size_t(batch.labels[i]);
        const double u = -0.3 + 1.6 * rng.next_double();
        for (std::size_t r = 0; r < d; ++r) {
            const double on_line = segs.a[y][r] + u * (segs.b[y][r] - segs.a[y][r]);
            batch.features(i, r) = on_line + 0.8 * rng.next_gaussian();
        }
    }
    return batch;
}

// Kink guards. FD is only trusted away from hinge activations, vertex-min
// ties, projection-clamp switches and arccos clamp regions.
constexpr double kGuard = 1e-3;

inline bool intra_tame(const EmbeddingBatch& batch, const LineSegmentSet& segs, IntraMode mode) {
    const std::size_t d = batch.dim();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::size_t y = std::size_t(batch.labels[i]);
        if (mode == IntraMode::nearest_vertex) {
            const double da = euclidean_distance(batch.features.row(i), segs.a[y].data(), d);
            const double db = euclidean_distance(batch.features.row(i), segs.b[y].data(), d);
            if (std::abs(da - db) < kGuard) return false;
        } else {
            const auto p =
                point_segment_distance(batch.features.row_vec(i), segs.a[y], segs.b[y]);
            if (std::min(p.t, 1.0 - p.t) < kGuard) return false;
        }
    }
    return true;
}

inline bool inter_tame(const EmbeddingBatch& batch, const LineSegmentSet& segs, double delta) {
    const std::size_t c = segs.num_classes();
    bool any_active = false;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const int y = batch.labels[i];
        double best = -1.0, second = -1.0;
        for (std::size_t j = 0; j < c; ++j) {
            if (int(j) == y) continue;
            const double dj =
                point_segment_distance(batch.features.row_vec(i), segs.a[j], segs.b[j]).distance;
            if (best < 0.0 || dj < best) {
                second = best;
                best = dj;
            } else if (second < 0.0 || dj < second) {
                second = dj;
            }
        }
        if (best < kGuard) return false;
        if (std::abs(delta - best) < kGuard) return false;
        if (second >= 0.0 && second - best < kGuard) return false;
        if (best < delta) any_active = true;
    }
    return any_active;
}

inline Instance make_instance(const std::string& name, Rng& rng) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        if (name == "softmax") {
            EmbeddingBatch batch{random_matrix(rng, kN, kD), random_labels(rng, kN, kC)};
            ClassifierParams params{random_matrix(rng, kD, kC), sample_standard_normal(rng, kC)};
            auto f = [batch, params](const Vec& x) mutable {
                std::size_t off = 0;
                for (double& v : batch.features.data) v = x[off++];
                for (double& v : params.weights.data) v = x[off++];
                for (double& v : params.biases) v = x[off++];
                return softmax_loss(params, batch).value;
            };
            const LossResult lr = softmax_loss(params, batch);
            return {concat({&batch.features.data, &params.weights.data, &params.biases}), f,
                    concat({&lr.grad_embeddings.data, &lr.grad_weights.data, &lr.grad_biases})};
        }
        if (name == "normalized_softmax" || name == "sphereface" || name == "cosface" ||
            name == "arcface") {
            EmbeddingBatch batch{random_matrix(rng, kN, kD), random_labels(rng, kN, kC)};
            ClassifierParams params{random_matrix(rng, kD, kC), Vec(kC, 0.0)};
            if (!cosines_tame(params, batch)) continue;
            MarginSpec spec;
            bool margin = true;
            if (name == "normalized_softmax") {
                margin = false;
                spec.s = 12.0;
            } else if (name == "sphereface") {
                spec = {MarginFamily::multiplicative_angular, 2.0, 8.0};
            } else if (name == "cosface") {
                spec = {MarginFamily::additive_cosine, 0.25, 8.0};
            } else {
                spec = {MarginFamily::additive_angular, 0.3, 8.0};
            }
            auto f = [batch, params, spec, margin](const Vec& x) mutable {
                std::size_t off = 0;
                for (double& v : batch.features.data) v = x[off++];
                for (double& v : params.weights.data) v = x[off++];
                return margin ? margin_softmax_loss(params, batch, spec).value
                              : normalized_softmax_loss(params, batch, spec.s).value;
            };
            const LossResult lr = margin ? margin_softmax_loss(params, batch, spec)
                                         : normalized_softmax_loss(params, batch, spec.s);
            return {concat({&batch.features.data, &params.weights.data}), f,
                    concat({&lr.grad_embeddings.data, &lr.grad_weights.data})};
        }
        if (name == "triplet") {
            const double m = 1.0;
            Vec a = sample_standard_normal(rng, kD);
            Vec p = sample_standard_normal(rng, kD);
            Vec q = sample_standard_normal(rng, kD);
            const double active = m + squared_distance(a.data(), p.data(), kD) -
                                  squared_distance(a.data(), q.data(), kD);
            if (std::abs(active) < kGuard) continue;
            auto f = [m](const Vec& x) {
                const Vec a2(x.begin(), x.begin() + kD);
                const Vec p2(x.begin() + kD, x.begin() + 2 * kD);
                const Vec q2(x.begin() + 2 * kD, x.end());
                return triplet_loss(a2, p2, q2, m).value;
            };
            const LossResult lr = triplet_loss(a, p, q, m);
            return {concat({&a, &p, &q}), f, lr.grad_embeddings.data};
        }
        if (name == "center") {
            EmbeddingBatch batch{random_matrix(rng, kN, kD), random_labels(rng, kN, kC)};
            CenterSet centers{random_matrix(rng, kC, kD), 0.5};
            auto f = [batch, centers](const Vec& x) mutable {
                std::size_t off = 0;
                for (double& v : batch.features.data) v = x[off++];
                for (double& v : centers.centers.data) v = x[off++];
                return center_loss(batch, centers).value;
            };
            const LossResult lr = center_loss(batch, centers);
            return {concat({&batch.features.data, &centers.centers.data}), f,
                    concat({&lr.grad_embeddings.data, &lr.grad_centers.data})};
        }
        if (name == "triplet_center") {
            const double m = 0.5;
            EmbeddingBatch batch{random_matrix(rng, kN, kD), random_labels(rng, kN, kC)};
            CenterSet centers{random_matrix(rng, kC, kD), 0.5};
            bool tame = true;
            for (std::size_t i = 0; i < kN && tame; ++i) {
                const std::size_t y = std::size_t(batch.labels[i]);
                const double d_own =
                    0.5 * squared_distance(batch.features.row(i), centers.centers.row(y), kD);
                double best = -1.0, second = -1.0;
                for (std::size_t j = 0; j < kC; ++j) {
                    if (j == y) continue;
                    const double dj =
                        0.5 * squared_distance(batch.features.row(i), centers.centers.row(j), kD);
                    if (best < 0.0 || dj < best) {
                        second = best;
                        best = dj;
                    } else if (second < 0.0 || dj < second) {
                        second = dj;
                    }
                }
                if (std::abs(d_own + m - best) < kGuard) tame = false;
                if (second >= 0.0 && second - best < kGuard) tame = false;
            }
            if (!tame) continue;
            auto f = [batch, centers, m](const Vec& x) mutable {
                std::size_t off = 0;
                for (double& v : batch.features.data) v = x[off++];
                for (double& v : centers.centers.data) v = x[off++];
                return triplet_center_loss(batch, centers, m).value;
            };
            const LossResult lr = triplet_center_loss(batch, centers, m);
            return {concat({&batch.features.data, &centers.centers.data}), f,
                    concat({&lr.grad_embeddings.data, &lr.grad_centers.data})};
        }
        if (name == "daal_intra" || name == "daal_inter" || name == "total") {
            LineSegmentSet segs = random_segments(rng, kC, kD);
            EmbeddingBatch batch = embeddings_near_segments(rng, segs, kN);
            if (name == "daal_intra") {
                // Both readings of the intra term are checked in turn.
                const IntraMode mode =
                    rng.next_double() < 0.5 ? IntraMode::segment : IntraMode::nearest_vertex;
                if (!intra_tame(batch, segs, mode)) continue;
                auto f = [batch, segs, mode](const Vec& x) mutable {
                    batch.features.data = x;
                    return intra_loss(batch, segs, mode).value;
                };
                const LossResult lr = intra_loss(batch, segs, mode);
                return {batch.features.data, f, lr.grad_embeddings.data};
            }
            if (name == "daal_inter") {
                const double delta = 1.5;
                if (!inter_tame(batch, segs, delta)) continue;
                auto f = [batch, segs, delta](const Vec& x) mutable {
                    batch.features.data = x;
                    return inter_loss(batch, segs, delta).value;
                };
                const LossResult lr = inter_loss(batch, segs, delta);
                return {batch.features.data, f, lr.grad_embeddings.data};
            }
            DaalConfig cfg;  // defaults: delta 1.5, segment mode
            ClassifierParams params{random_matrix(rng, kD, kC), sample_standard_normal(rng, kC)};
            if (!intra_tame(batch, segs, cfg.intra_mode)) continue;
            if (!inter_tame(batch, segs, cfg.delta)) continue;
            TotalLossWeights w;
            auto f = [batch, params, segs, cfg, w](const Vec& x) mutable {
                std::size_t off = 0;
                for (double& v : batch.features.data) v = x[off++];
                for (double& v : params.weights.data) v = x[off++];
                for (double& v : params.biases) v = x[off++];
                return total_loss(softmax_loss(params, batch), daal_loss(batch, segs, cfg), w)
                    .value;
            };
            const LossResult lr =
                total_loss(softmax_loss(params, batch), daal_loss(batch, segs, cfg), w);
            return {concat({&batch.features.data, &params.weights.data, &params.biases}), f,
                    concat({&lr.grad_embeddings.data, &lr.grad_weights.data, &lr.grad_biases})};
        }
        throw ConfigError("gradcheck: unknown loss '" + name + "'");
    }
    throw NumericError("gradcheck: could not sample a non-degenerate instance for '" + name + "'");
}

}  // namespace gradcheck_detail

inline const std::vector<std::string>& gradcheck_loss_names() {
    static const std::vector<std::string> names = {
        "softmax",       "normalized_softmax", "sphereface", "cosface",
        "arcface",       "triplet",            "center",     "triplet_center",
        "daal_intra",    "daal_inter",         "total",
    };
    return names;
}

/// Checks one loss at `points` random non-degenerate evaluation points.
inline GradCheckReport run_gradcheck_one(const std::string& name, std::uint64_t seed,
                                         std::size_t points = 50, double h = 1e-5,
                                         double tol = 1e-4) {
    const auto& names = gradcheck_loss_names();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ConfigError("gradcheck: unknown loss '" + name + "'");
    Rng rng = Rng(seed).substream(100 + std::size_t(it - names.begin()));
    GradCheckReport report;
    report.loss = name;
    report.points = points;
    for (std::size_t p = 0; p < points; ++p) {
        const auto inst = gradcheck_detail::make_instance(name, rng);
        const double err = gradcheck_detail::compare_grad(inst.f, inst.x0, inst.analytic, h);
        report.max_rel_err = std::max(report.max_rel_err, err);
    }
    report.pass = report.max_rel_err < tol;
    return report;
}

/// Runs the suite for one named loss or, with "all", for every loss.
inline std::vector<GradCheckReport> run_gradcheck(const std::string& name, std::uint64_t seed,
                                                  std::size_t points = 50) {
    std::vector<GradCheckReport> reports;
    if (name == "all" || name.empty()) {
        for (const auto& loss : gradcheck_loss_names())
            reports.push_back(run_gradcheck_one(loss, seed, points));
        return reports;
    }
    const auto& names = gradcheck_loss_names();
    if (std::find(names.begin(), names.end(), name) == names.end())
        throw ConfigError("gradcheck: unknown loss '" + name + "'");
    reports.push_back(run_gradcheck_one(name, seed, points));
    return reports;
}

}  // namespace daal
