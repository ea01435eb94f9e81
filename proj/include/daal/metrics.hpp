#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "numerics.hpp"

namespace daal {

struct Partition {
    std::vector<int> assignments;
    int num_clusters = 0;

    std::size_t size() const { return assignments.size(); }
};

struct EvalReport {
    double nmi = 0.0;
    std::map<std::size_t, double> recall_at;
    double recall_average = 0.0;
    std::uint64_t seed = 0;
    std::string config_hash;
};

namespace detail {

inline double wcss_of(const Matrix& points, const std::vector<int>& assign,
                      const Matrix& centers) {
    double acc = 0.0;
    for (std::size_t i = 0; i < points.rows; ++i)
        acc += squared_distance(points.row(i), centers.row(std::size_t(assign[i])), points.cols);
    return acc;
}

}  // namespace detail

struct KMeansRun {
    Partition partition;
    double wcss = 0.0;
    std::vector<double> wcss_trace;  // after each assignment pass
};

/// One Lloyd run with k-means++ seeding. Ties in assignment go to the lowest
/// center index; an emptied cluster is re-seeded to the point farthest from
/// its current center.
inline KMeansRun kmeans_single(const Matrix& points, std::size_t k, std::size_t max_iter,
                               Rng& rng) {
    const std::size_t n = points.rows;
    const std::size_t d = points.cols;

    Matrix centers(k, d);
    {
        std::vector<double> dist_sq(n, std::numeric_limits<double>::infinity());
        std::vector<bool> used(n, false);
        const std::size_t first = rng.next_index(n);
        used[first] = true;
        centers.set_row(0, points.row_vec(first));
        for (std::size_t c = 1; c < k; ++c) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double ds = squared_distance(points.row(i), centers.row(c - 1), d);
                dist_sq[i] = std::min(dist_sq[i], ds);
                total += dist_sq[i];
            }
            std::size_t chosen = n;
            if (total > 0.0) {
                const double r = rng.next_double() * total;
                double acc = 0.0;
                chosen = n - 1;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += dist_sq[i];
                    if (acc > r) {
                        chosen = i;
                        break;
                    }
                }
            } else {
                // All remaining mass is zero (duplicate points); take the
                // lowest index not yet used as a center.
                for (std::size_t i = 0; i < n; ++i) {
                    if (!used[i]) {
                        chosen = i;
                        break;
                    }
                }
                if (chosen == n) chosen = c % n;  // every point already a center
            }
            used[chosen] = true;
            centers.set_row(c, points.row_vec(chosen));
        }
    }

    KMeansRun run;
    run.partition.num_clusters = int(k);
    run.partition.assignments.assign(n, 0);
    std::vector<int>& assign = run.partition.assignments;
    std::vector<int> prev(n, -1);

    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (std::size_t c = 0; c < k; ++c) {
                const double ds = squared_distance(points.row(i), centers.row(c), d);
                if (ds < best) {
                    best = ds;
                    best_c = int(c);
                }
            }
            assign[i] = best_c;
        }
        run.wcss_trace.push_back(detail::wcss_of(points, assign, centers));
        if (assign == prev) break;
        prev = assign;

        Matrix sums(k, d);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = std::size_t(assign[i]);
            ++counts[c];
            for (std::size_t r = 0; r < d; ++r) sums(c, r) += points(i, r);
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t r = 0; r < d; ++r) centers(c, r) = sums(c, r) / double(counts[c]);
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            double far = -1.0;
            std::size_t far_i = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double ds =
                    squared_distance(points.row(i), centers.row(std::size_t(assign[i])), d);
                if (ds > far) {
                    far = ds;
                    far_i = i;
                }
            }
            centers.set_row(c, points.row_vec(far_i));
        }
    }
    run.wcss = detail::wcss_of(points, assign, centers);
    return run;
}

/// Best of `restarts` seeded Lloyd runs by within-cluster sum of squares.
inline Partition kmeans(const Matrix& points, std::size_t k, std::size_t restarts,
                        std::size_t max_iter, std::uint64_t seed) {
    if (k < 1) throw ConfigError("kmeans: k must be >= 1");
    if (k > points.rows)
        throw ConfigError("kmeans: k = " + std::to_string(k) + " exceeds " +
                          std::to_string(points.rows) + " points");
    if (restarts < 1) throw ConfigError("kmeans: need at least one restart");

    Rng base(seed);
    KMeansRun best;
    bool have = false;
    for (std::size_t r = 0; r < restarts; ++r) {
        Rng rng = base.substream(r);
        KMeansRun run = kmeans_single(points, k, max_iter, rng);
        if (!have || run.wcss < best.wcss) {
            best = std::move(run);
            have = true;
        }
    }
    return best.partition;
}

/// Mutual information over the average of the two entropies, natural log,
/// with 0 log 0 taken as 0. Two constant partitions agree perfectly: 1.
inline double nmi(const Partition& pred, const Partition& truth) {
    const std::size_t n = pred.size();
    if (n != truth.size()) throw DimensionError("nmi: partition length mismatch");
    if (n == 0) throw DomainError("nmi: empty partitions");

    int kp = 0, kt = 0;
    for (int a : pred.assignments) kp = std::max(kp, a + 1);
    for (int a : truth.assignments) kt = std::max(kt, a + 1);

    Matrix joint{std::size_t(kp), std::size_t(kt)};
    std::vector<double> pa(std::size_t(kp), 0.0), pb(std::size_t(kt), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        joint(std::size_t(pred.assignments[i]), std::size_t(truth.assignments[i])) += 1.0;
        pa[std::size_t(pred.assignments[i])] += 1.0;
        pb[std::size_t(truth.assignments[i])] += 1.0;
    }

    const double inv_n = 1.0 / double(n);
    double mi = 0.0;
    for (int a = 0; a < kp; ++a) {
        for (int b = 0; b < kt; ++b) {
            const double nab = joint(std::size_t(a), std::size_t(b));
            if (nab <= 0.0) continue;
            mi += nab * inv_n * std::log(nab * double(n) / (pa[std::size_t(a)] * pb[std::size_t(b)]));
        }
    }
    double ha = 0.0, hb = 0.0;
    for (int a = 0; a < kp; ++a)
        if (pa[std::size_t(a)] > 0.0) ha -= pa[std::size_t(a)] * inv_n * std::log(pa[std::size_t(a)] * inv_n);
    for (int b = 0; b < kt; ++b)
        if (pb[std::size_t(b)] > 0.0) hb -= pb[std::size_t(b)] * inv_n * std::log(pb[std::size_t(b)] * inv_n);

    const double denom = 0.5 * (ha + hb);
    if (denom <= 0.0) return 1.0;  // both sides constant
    return std::clamp(mi / denom, 0.0, 1.0);
}

/// Fraction of queries with a same-label hit among the K nearest neighbors
/// (Euclidean, self excluded, distance ties broken by lower index). All Ks
/// are scored from one sorted neighbor list per query.
inline std::map<std::size_t, double> recall_at_k(const Matrix& embeddings,
                                                 const std::vector<int>& labels,
                                                 const std::vector<std::size_t>& ks) {
    const std::size_t n = embeddings.rows;
    if (labels.size() != n) throw DimensionError("recall_at_k: label count mismatch");
    if (ks.empty()) throw ConfigError("recall_at_k: empty K list");
    std::size_t max_k = 0;
    for (std::size_t k : ks) {
        if (k == 0) throw ConfigError("recall_at_k: K must be >= 1");
        if (k >= n)
            throw ConfigError("recall_at_k: K = " + std::to_string(k) + " must be below " +
                              std::to_string(n) + " samples");
        max_k = std::max(max_k, k);
    }

    std::map<std::size_t, double> hits;
    for (std::size_t k : ks) hits[k] = 0.0;

    std::vector<std::pair<double, std::size_t>> neighbors;
    neighbors.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        neighbors.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            neighbors.emplace_back(squared_distance(embeddings.row(i), embeddings.row(j),
                                                    embeddings.cols),
                                   j);
        }
        std::sort(neighbors.begin(), neighbors.end());
        // Same-class hit positions are non-decreasing: find the first one.
        std::size_t first_hit = n;
        for (std::size_t rank = 0; rank < max_k; ++rank) {
            if (labels[neighbors[rank].second] == labels[i]) {
                first_hit = rank + 1;
                break;
            }
        }
        for (std::size_t k : ks)
            if (first_hit <= k) hits[k] += 1.0;
    }
    for (auto& [k, v] : hits) v /= double(n);
    return hits;
}

/// Unweighted mean over the provided K values.
inline double recall_average(const std::map<std::size_t, double>& recalls) {
    if (recalls.empty()) throw ConfigError("recall_average: empty recall map");
    double acc = 0.0;
    for (const auto& [k, v] : recalls) acc += v;
    return acc / double(recalls.size());
}

}  // namespace daal
