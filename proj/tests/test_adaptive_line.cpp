#include <catch2/catch.hpp>

#include <cmath>
#include <cstring>

#include <daal/adaptive_line.hpp>

using namespace daal;

namespace {

LineSegmentSet make_segments(std::vector<Vec> a, std::vector<Vec> b) {
    LineSegmentSet set;
    set.dim = a[0].size();
    set.a = std::move(a);
    set.b = std::move(b);
    set.v_hat.resize(set.a.size());
    for (std::size_t k = 0; k < set.a.size(); ++k) {
        Vec dir(set.dim);
        for (std::size_t r = 0; r < set.dim; ++r) dir[r] = set.b[k][r] - set.a[k][r];
        set.v_hat[k] = l2_norm(dir) > 1e-12 ? normalize(dir) : Vec(set.dim, 0.0);
    }
    return set;
}

BatchClassStats manual_stats(std::vector<Vec> centroids, std::vector<double> variances,
                             std::vector<std::size_t> counts) {
    BatchClassStats stats;
    stats.centroid = std::move(centroids);
    stats.variance = std::move(variances);
    stats.count = std::move(counts);
    return stats;
}

}  // namespace

TEST_CASE("init_segments construction", "[daal]") {
    Rng rng(31);
    const double length = 2.5;
    const LineSegmentSet set = init_segments(5, 7, length, rng);
    for (std::size_t k = 0; k < 5; ++k) {
        Vec dir(7);
        for (std::size_t r = 0; r < 7; ++r) dir[r] = set.b[k][r] - set.a[k][r];
        CHECK(l2_norm(dir) == Approx(length).margin(1e-9));
        CHECK(l2_norm(set.v_hat[k]) == Approx(1.0).margin(1e-9));
    }

    Rng rng_a(17), rng_b(17);
    const LineSegmentSet s1 = init_segments(3, 4, 1.0, rng_a);
    const LineSegmentSet s2 = init_segments(3, 4, 1.0, rng_b);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(s1.a[k] == s2.a[k]);
        CHECK(s1.b[k] == s2.b[k]);
    }

    Rng rng1(5);
    const LineSegmentSet one_d = init_segments(8, 1, 1.0, rng1);
    for (std::size_t k = 0; k < 8; ++k)
        CHECK(std::abs(one_d.v_hat[k][0]) == Approx(1.0));
}

TEST_CASE("batch_class_stats centroids and variances", "[daal]") {
    EmbeddingBatch single;
    single.features = Matrix(1, 2);
    single.features(0, 0) = 3.0;
    single.features(0, 1) = -1.0;
    single.labels = {0};
    const auto s1 = batch_class_stats(single, 2);
    CHECK(s1.count[0] == 1);
    CHECK(s1.centroid[0] == Vec{3.0, -1.0});
    CHECK(s1.variance[0] == 0.0);
    CHECK(s1.count[1] == 0);
    CHECK(s1.centroid[1].empty());

    EmbeddingBatch pair;
    pair.features = Matrix(2, 2);
    pair.features(1, 0) = 2.0;
    pair.labels = {0, 0};
    const auto s2 = batch_class_stats(pair);
    CHECK(s2.centroid[0] == Vec{1.0, 0.0});
    CHECK(s2.variance[0] == Approx(1.0));

    EmbeddingBatch vertical;
    vertical.features = Matrix(2, 2);
    vertical.features(1, 1) = 4.0;
    vertical.labels = {0, 0};
    const auto s3 = batch_class_stats(vertical);
    CHECK(s3.centroid[0] == Vec{0.0, 2.0});
    CHECK(s3.variance[0] == Approx(4.0));
}

TEST_CASE("target_vertices places targets along the segment direction", "[daal]") {
    const auto segments = make_segments({{0.0, 0.0}}, {{1.0, 0.0}});

    // sigma = 0.2, eta = 5: half-length 1 on each side of the centroid
    auto t = target_vertices(manual_stats({{0.0, 0.0}}, {0.04}, {2}), segments, 5.0);
    REQUIRE(t.valid[0]);
    CHECK(t.a[0][0] == Approx(-1.0));
    CHECK(t.a[0][1] == Approx(0.0).margin(1e-15));
    CHECK(t.b[0][0] == Approx(1.0));

    // zero variance collapses the target to the centroid
    auto z = target_vertices(manual_stats({{0.7, -0.2}}, {0.0}, {1}), segments, 5.0);
    CHECK(z.a[0] == Vec{0.7, -0.2});
    CHECK(z.b[0] == Vec{0.7, -0.2});

    // doubling eta doubles the target length
    auto t1 = target_vertices(manual_stats({{0.0, 0.0}}, {0.25}, {3}), segments, 2.0);
    auto t2 = target_vertices(manual_stats({{0.0, 0.0}}, {0.25}, {3}), segments, 4.0);
    const double len1 = t1.b[0][0] - t1.a[0][0];
    const double len2 = t2.b[0][0] - t2.a[0][0];
    CHECK(len2 == Approx(2.0 * len1));

    // absent class produces no target
    auto segs2 = make_segments({{0.0, 0.0}, {1.0, 1.0}}, {{1.0, 0.0}, {2.0, 1.0}});
    auto t3 = target_vertices(manual_stats({{0.0, 0.0}, {}}, {0.1, 0.0}, {2, 0}), segs2, 5.0);
    CHECK(t3.valid[0]);
    CHECK_FALSE(t3.valid[1]);
}

TEST_CASE("point_segment_distance examples", "[daal]") {
    const auto mid = point_segment_distance({0.5, 1.0}, {0.0, 0.0}, {1.0, 0.0});
    CHECK(mid.distance == Approx(1.0));
    CHECK(mid.t == Approx(0.5));

    const auto beyond = point_segment_distance({2.0, 0.0}, {0.0, 0.0}, {1.0, 0.0});
    CHECK(beyond.distance == Approx(1.0));
    CHECK(beyond.t == 1.0);

    const auto before = point_segment_distance({-1.0, 1.0}, {0.0, 0.0}, {1.0, 0.0});
    CHECK(before.distance == Approx(std::sqrt(2.0)));
    CHECK(before.t == 0.0);

    const auto degenerate = point_segment_distance({3.0, 4.0}, {0.0, 0.0}, {0.0, 0.0});
    CHECK(degenerate.distance == Approx(5.0));
    CHECK(degenerate.t == 0.0);

    CHECK_THROWS_AS(point_segment_distance({1.0}, {0.0, 0.0}, {1.0, 0.0}), DimensionError);
}

TEST_CASE("point_segment_distance properties on fuzzed instances", "[daal][property]") {
    Rng rng(41);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t d = 1 + rng.next_index(6);
        Vec a = sample_standard_normal(rng, d);
        Vec b = sample_standard_normal(rng, d);
        for (std::size_t r = 0; r < d; ++r) {
            a[r] *= 5.0;
            b[r] *= 5.0;
        }
        Vec diff(d);
        for (std::size_t r = 0; r < d; ++r) diff[r] = b[r] - a[r];
        if (l2_norm(diff) < 1e-6) continue;

        // a point on the segment has distance ~0
        const double u = rng.next_double();
        Vec on(d);
        for (std::size_t r = 0; r < d; ++r) on[r] = a[r] + u * (b[r] - a[r]);
        CHECK(point_segment_distance(on, a, b).distance <= 1e-9);

        // swapping the vertices mirrors t and keeps the distance
        const Vec e = sample_standard_normal(rng, d);
        const auto fwd = point_segment_distance(e, a, b);
        const auto rev = point_segment_distance(e, b, a);
        CHECK(std::abs(fwd.distance - rev.distance) <= 1e-12);
        CHECK(std::abs(fwd.t - (1.0 - rev.t)) <= 1e-12);

        // the segment is never farther than either vertex
        Vec ea(d), eb(d);
        for (std::size_t r = 0; r < d; ++r) {
            ea[r] = e[r] - a[r];
            eb[r] = e[r] - b[r];
        }
        CHECK(fwd.distance <= std::min(l2_norm(ea), l2_norm(eb)) + 1e-12);
    }
}

TEST_CASE("intra_loss modes", "[daal]") {
    const auto segments =
        make_segments({{0.0, 0.0}, {5.0, 5.0}}, {{2.0, 0.0}, {5.0, 9.0}});

    EmbeddingBatch at_a;
    at_a.features = Matrix(2, 2);
    at_a.features(1, 0) = 5.0;
    at_a.features(1, 1) = 5.0;
    at_a.labels = {0, 1};
    CHECK(intra_loss(at_a, segments, IntraMode::nearest_vertex).value == 0.0);
    CHECK(intra_loss(at_a, segments, IntraMode::segment).value == 0.0);

    EmbeddingBatch midpoint;  // midpoint of segment 0 (length 2)
    midpoint.features = Matrix(1, 2);
    midpoint.features(0, 0) = 1.0;
    midpoint.labels = {0};
    CHECK(intra_loss(midpoint, segments, IntraMode::nearest_vertex).value == Approx(1.0));
    CHECK(intra_loss(midpoint, segments, IntraMode::segment).value == Approx(0.0).margin(1e-18));

    EmbeddingBatch bad;
    bad.features = Matrix(1, 2);
    bad.labels = {9};
    CHECK_THROWS_AS(intra_loss(bad, segments, IntraMode::segment), DomainError);
}

TEST_CASE("segment-mode intra never exceeds vertex-mode intra", "[daal][property]") {
    Rng rng(43);
    for (int trial = 0; trial < 200; ++trial) {
        const LineSegmentSet segments = init_segments(4, 3, 1.0 + rng.next_double(), rng);
        EmbeddingBatch batch;
        batch.features = Matrix(6, 3);
        for (double& v : batch.features.data) v = 2.0 * rng.next_gaussian();
        batch.labels.resize(6);
        for (auto& y : batch.labels) y = int(rng.next_index(4));
        CHECK(intra_loss(batch, segments, IntraMode::segment).value <=
              intra_loss(batch, segments, IntraMode::nearest_vertex).value + 1e-12);
    }
}

TEST_CASE("inter_loss margins", "[daal]") {
    const auto segments = make_segments({{0.0, 0.0}, {10.0, 0.0}}, {{1.0, 0.0}, {11.0, 0.0}});

    EmbeddingBatch far_apart;
    far_apart.features = Matrix(2, 2);
    far_apart.features(0, 0) = 0.5;
    far_apart.features(1, 0) = 10.5;
    far_apart.labels = {0, 1};
    CHECK(inter_loss(far_apart, segments, 1.5).value == 0.0);

    EmbeddingBatch on_wrong;  // sits exactly on segment 1
    on_wrong.features = Matrix(1, 2);
    on_wrong.features(0, 0) = 10.5;
    on_wrong.labels = {0};
    CHECK(inter_loss(on_wrong, segments, 1.5).value == Approx(1.5));

    LineSegmentSet lone = make_segments({{0.0, 0.0}}, {{1.0, 0.0}});
    CHECK_THROWS_AS(inter_loss(on_wrong, lone, 1.5), ConfigError);
}

TEST_CASE("inter_loss matches a brute-force min over wrong segments", "[daal]") {
    Rng rng(44);
    const LineSegmentSet segments = init_segments(3, 4, 1.5, rng);
    EmbeddingBatch batch;
    batch.features = Matrix(5, 4);
    for (double& v : batch.features.data) v = 1.5 * rng.next_gaussian();
    batch.labels = {0, 1, 2, 0, 1};
    const double delta = 2.0;
    const LossResult lr = inter_loss(batch, segments, delta);

    double expected = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        double best = 1e300;
        for (std::size_t j = 0; j < 3; ++j) {
            if (int(j) == batch.labels[i]) continue;
            best = std::min(best, point_segment_distance(batch.features.row_vec(i), segments.a[j],
                                                         segments.b[j])
                                      .distance);
        }
        expected += std::max(0.0, delta - best);
    }
    expected /= 5.0;
    CHECK(lr.value == Approx(expected).margin(1e-12));
}

TEST_CASE("daal_loss composes intra and inter", "[daal]") {
    Rng rng(45);
    const LineSegmentSet segments = init_segments(3, 4, 1.0, rng);
    EmbeddingBatch batch;
    batch.features = Matrix(6, 4);
    for (double& v : batch.features.data) v = rng.next_gaussian();
    batch.labels = {0, 1, 2, 2, 1, 0};

    DaalConfig cfg;
    cfg.lambda_inter = 0.0;
    CHECK(daal_loss(batch, segments, cfg).value ==
          intra_loss(batch, segments, cfg.intra_mode).value);

    cfg.lambda_inter = 0.7;
    const double composed = daal_loss(batch, segments, cfg).value;
    const double expected = intra_loss(batch, segments, cfg.intra_mode).value +
                            0.7 * inter_loss(batch, segments, cfg.delta).value;
    CHECK(composed == Approx(expected).margin(1e-12));
}

TEST_CASE("daal_loss is bit-deterministic", "[daal]") {
    Rng rng(46);
    const LineSegmentSet segments = init_segments(4, 5, 1.0, rng);
    EmbeddingBatch batch;
    batch.features = Matrix(8, 5);
    for (double& v : batch.features.data) v = rng.next_gaussian();
    batch.labels = {0, 1, 2, 3, 0, 1, 2, 3};

    const DaalConfig cfg;
    const LossResult r1 = daal_loss(batch, segments, cfg);
    const LossResult r2 = daal_loss(batch, segments, cfg);
    CHECK(std::memcmp(&r1.value, &r2.value, sizeof(double)) == 0);
    REQUIRE(r1.grad_embeddings.data.size() == r2.grad_embeddings.data.size());
    CHECK(std::memcmp(r1.grad_embeddings.data.data(), r2.grad_embeddings.data.data(),
                      r1.grad_embeddings.data.size() * sizeof(double)) == 0);
}

TEST_CASE("embeddings resting on their segments cost nothing", "[daal]") {
    // two segments far beyond the delta margin from each other
    const auto segments =
        make_segments({{0.0, 0.0}, {100.0, 0.0}}, {{3.0, 0.0}, {103.0, 0.0}});
    EmbeddingBatch batch;
    batch.features = Matrix(4, 2);
    batch.labels = {0, 0, 1, 1};
    const double ts[] = {0.2, 0.8, 0.4, 0.6};
    for (std::size_t i = 0; i < 4; ++i) {
        const std::size_t y = std::size_t(batch.labels[i]);
        for (std::size_t r = 0; r < 2; ++r)
            batch.features(i, r) =
                segments.a[y][r] + ts[i] * (segments.b[y][r] - segments.a[y][r]);
    }
    DaalConfig cfg;  // delta 1.5, segment mode
    CHECK(daal_loss(batch, segments, cfg).value == 0.0);
}

TEST_CASE("ema_update drifts vertices toward targets", "[daal]") {
    const auto segments = make_segments({{0.0}}, {{1.0}});
    SegmentTargets targets;
    targets.valid = {1};
    targets.a = {{1.0}};
    targets.b = {{3.0}};

    const LineSegmentSet jumped = ema_update(segments, targets, 1.0);
    CHECK(jumped.a[0][0] == 1.0);
    CHECK(jumped.b[0][0] == 3.0);

    const LineSegmentSet slow = ema_update(segments, targets, 0.001);
    CHECK(slow.a[0][0] == Approx(0.001));

    SegmentTargets none;
    none.valid = {0};
    none.a = {{}};
    none.b = {{}};
    const LineSegmentSet still = ema_update(segments, none, 0.5);
    CHECK(still.a[0][0] == 0.0);
    CHECK(still.b[0][0] == 1.0);

    CHECK_THROWS_AS(ema_update(segments, targets, 0.0), ConfigError);
}

TEST_CASE("ema_update contracts geometrically", "[daal][property]") {
    for (const double tau : {0.001, 0.1, 1.0}) {
        LineSegmentSet segments = make_segments({{0.0, 2.0}}, {{1.0, -1.0}});
        SegmentTargets targets;
        targets.valid = {1};
        targets.a = {{0.5, 0.25}};
        targets.b = {{2.0, 0.5}};
        const Vec a0 = segments.a[0];

        const int n = 40;
        for (int step = 0; step < n; ++step) segments = ema_update(segments, targets, tau);
        const double shrink = std::pow(1.0 - tau, n);
        for (std::size_t r = 0; r < 2; ++r) {
            const double expected = targets.a[0][r] + shrink * (a0[r] - targets.a[0][r]);
            CHECK(std::abs(segments.a[0][r] - expected) <= 1e-12);
        }
    }
}

TEST_CASE("target segment length tracks the variance", "[daal][property]") {
    Rng rng(48);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t d = 2 + rng.next_index(5);
        Vec a = sample_standard_normal(rng, d);
        Vec b = sample_standard_normal(rng, d);
        for (std::size_t r = 0; r < d; ++r) b[r] = a[r] + b[r] * 2.0 + (r == 0 ? 0.5 : 0.0);
        const auto segments = make_segments({a}, {b});

        const double sigma = 3.0 * rng.next_double();
        const double eta = 0.5 + 5.0 * rng.next_double();
        const auto targets = target_vertices(
            manual_stats({sample_standard_normal(rng, d)}, {sigma * sigma}, {2}), segments, eta);
        Vec span(d);
        for (std::size_t r = 0; r < d; ++r) span[r] = targets.b[0][r] - targets.a[0][r];
        CHECK(std::abs(l2_norm(span) - 2.0 * eta * sigma) <= 1e-12);
    }
}

TEST_CASE("total_loss weighting", "[daal]") {
    Rng rng(49);
    const LineSegmentSet segments = init_segments(3, 4, 1.0, rng);
    EmbeddingBatch batch;
    batch.features = Matrix(4, 4);
    for (double& v : batch.features.data) v = rng.next_gaussian();
    batch.labels = {0, 1, 2, 0};
    ClassifierParams params{Matrix(4, 3), Vec(3, 0.0)};
    for (double& v : params.weights.data) v = rng.next_gaussian();

    const LossResult sm = softmax_loss(params, batch);
    const LossResult dl = daal_loss(batch, segments, DaalConfig{});

    const LossResult only_sm = total_loss(sm, dl, {1.0, 0.0});
    CHECK(only_sm.value == sm.value);
    CHECK(only_sm.grad_embeddings.data ==
          total_loss(sm, LossResult{0.0, Matrix(4, 4), {}, {}, {}}, {1.0, 0.0})
              .grad_embeddings.data);

    const LossResult only_dl = total_loss(sm, dl, {0.0, 1.0});
    CHECK(only_dl.value == dl.value);

    const LossResult both = total_loss(sm, dl, {1.0, 0.01});
    CHECK(both.value == Approx(sm.value + 0.01 * dl.value).margin(1e-15));

    LossResult wrong_shape = dl;
    wrong_shape.grad_embeddings = Matrix(2, 2);
    CHECK_THROWS_AS(total_loss(sm, wrong_shape, {1.0, 1.0}), DimensionError);
}
