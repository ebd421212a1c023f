#include <doctest.h>

#include <cstring>
#include <map>

#include "fd_check.hpp"
#include "valr/alignment.hpp"
#include "valr/rng.hpp"

using namespace valr;

namespace {

Tensor randt(Rng& rng, std::vector<int> shape, double sd = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t.mut()[i] = rng.gauss() * sd;
    return t;
}

EncoderFeatures feat(const std::string& name, Tensor f) {
    EncoderFeatures e;
    e.encoder_name = name;
    e.P = f.rows();
    e.D = f.cols();
    e.features = std::move(f);
    return e;
}

// identity-configured head: square weights = I, biases = 0. With GELU in
// between this maps constant-positive rows onto the same ray, which is all
// cosine similarity sees.
ProjectionHead identity_head(const std::string& name, int d) {
    ProjectionHead h = ProjectionHead::init(name, d, d, 0);
    std::fill(h.w1.store->begin(), h.w1.store->end(), 0.0);
    std::fill(h.w2.store->begin(), h.w2.store->end(), 0.0);
    for (int i = 0; i < d; ++i) {
        h.w1.mut()[int64_t(i) * h.hidden + i] = 1.0;
        h.w2.mut()[int64_t(i) * d + i] = 1.0;
    }
    return h;
}

Tensor constant_rows(int P, int D, double base) {
    Tensor t = Tensor::zeros({P, D});
    for (int p = 0; p < P; ++p)
        for (int j = 0; j < D; ++j) t.mut()[int64_t(p) * D + j] = base * (p + 1);
    return t;
}

}  // namespace

TEST_CASE("upsample: K=4 to P=16 replicates each feature into its 2x2 block") {
    Rng rng(3);
    Tensor latent = randt(rng, {4, 5});
    Tape t;
    Tensor up = upsample_grid(t, latent, 16);
    REQUIRE(up.shape == std::vector<int>{16, 5});
    for (int j = 0; j < 5; ++j) CHECK(up.at(0, j) == latent.at(0, j));
    auto idx = upsample_index_map(4, 16);
    // each source row appears exactly 4 times
    std::map<int, int> counts;
    for (int s : idx) ++counts[s];
    for (auto [s, c] : counts) {
        CHECK(c == 4);
        CHECK(s >= 0);
        CHECK(s < 4);
    }
    // block structure: output rows (0,1,4,5) all map to source 0
    CHECK(idx[0] == 0);
    CHECK(idx[1] == 0);
    CHECK(idx[4] == 0);
    CHECK(idx[5] == 0);
}

TEST_CASE("upsample: identity when K equals P") {
    Rng rng(5);
    Tensor latent = randt(rng, {16, 7});
    Tape t;
    Tensor up = upsample_grid(t, latent, 16);
    CHECK(up.store.get() == latent.store.get());  // bitwise: same buffer
}

TEST_CASE("upsample: K=16 to P=64 counting oracle") {
    auto idx = upsample_index_map(16, 64);
    std::map<int, int> counts;
    for (int s : idx) ++counts[s];
    CHECK(counts.size() == 16);
    for (auto [s, c] : counts) CHECK(c == 4);
    // row-major flatten: first output row of the 8x8 grid covers sources 0..3
    CHECK(idx[0] == 0);
    CHECK(idx[2] == 1);
    CHECK(idx[7] == 3);
}

TEST_CASE("upsample rejects non-square and downsampling") {
    CHECK_THROWS_WITH_AS(upsample_index_map(3, 16), doctest::Contains("perfect square"), Error);
    CHECK_THROWS_WITH_AS(upsample_index_map(16, 4), doctest::Contains("downsampling"), Error);
}

TEST_CASE("repa identity case: loss = -1 within 1e-12") {
    const int K = 4, D = 8;
    ProjectionHead head = identity_head("idt", D);
    Tensor rows = constant_rows(K, D, 0.5);  // positive constant rows
    Tape t;
    Tensor loss = repa_loss_single(t, rows, head, feat("idt", rows.detached()));
    CHECK(loss.item() == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(std::abs(loss.item() + 1.0) <= 1e-12);
}

TEST_CASE("repa orthogonal case: loss = 0") {
    const int K = 4, D = 8;
    ProjectionHead head = identity_head("ort", D);
    // projected rows live in the first half of the axes, targets in the second
    Tensor rows = Tensor::zeros({K, D});
    Tensor tgt = Tensor::zeros({K, D});
    for (int p = 0; p < K; ++p) {
        rows.mut()[int64_t(p) * D + 0] = 1.0 + p;  // gelu keeps the ray
        tgt.mut()[int64_t(p) * D + D - 1] = 2.0;
    }
    Tape t;
    Tensor loss = repa_loss_single(t, rows, head, feat("ort", tgt));
    CHECK(loss.item() == 0.0);
}

TEST_CASE("repa gradient w.r.t. tapped features vs finite differences") {
    Rng rng(11);
    const int K = 4, D = 6;
    ProjectionHead head = ProjectionHead::init("g", 5, D, 9);
    EncoderFeatures target = feat("g", randt(rng, {16, D}));

    Tensor x0 = randt(rng, {K, 5});
    std::vector<double> flat(x0.data(), x0.data() + x0.size());
    Tape tape;
    Tensor x = x0;
    x.node = tape.leaf(x.size());
    Tensor loss = repa_loss_single(tape, x, head, target);
    tape.backward(loss.node);
    auto analytic = tape.grad(x.node);
    auto f = [&](const std::vector<double>& vals) {
        Tape t2;
        return repa_loss_single(t2, Tensor::from({K, 5}, vals), head, target).item();
    };
    CHECK(valr::test::fd_max_rel_err(f, flat, analytic) < 1e-5);
}

TEST_CASE("repa gradient w.r.t. head parameters") {
    Rng rng(13);
    const int K = 4, D = 6, dm = 5;
    ProjectionHead head = ProjectionHead::init("h", dm, D, 21);
    EncoderFeatures target = feat("h", randt(rng, {4, D}));
    Tensor span = randt(rng, {K, dm});

    std::vector<double> flat(head.w1.data(), head.w1.data() + head.w1.size());
    Tape tape;
    ProjectionHead hh = head;
    hh.w1.node = tape.leaf(hh.w1.size());
    Tensor loss = repa_loss_single(tape, span, hh, target);
    tape.backward(loss.node);
    auto analytic = tape.grad(hh.w1.node);
    auto f = [&](const std::vector<double>& vals) {
        Tape t2;
        ProjectionHead h2 = head;
        h2.w1 = Tensor::from(head.w1.shape, vals);
        return repa_loss_single(t2, span, h2, target).item();
    };
    CHECK(valr::test::fd_max_rel_err(f, flat, analytic) < 1e-5);
}

TEST_CASE("multi-encoder loss: singleton equals single, M=2 equals mean of singles") {
    Rng rng(17);
    const int K = 4, dm = 6;
    auto h1 = ProjectionHead::init("e1", dm, 5, 1);
    auto h2 = ProjectionHead::init("e2", dm, 7, 2);
    Tensor span = randt(rng, {K, dm});
    EncoderFeatures t1 = feat("e1", randt(rng, {4, 5}));
    EncoderFeatures t2 = feat("e2", randt(rng, {16, 7}));

    Tape t;
    double single = repa_loss_single(t, span, h1, t1).item();
    double multi1 = repa_loss_multi(t, span, {h1}, {t1}).item();
    CHECK(multi1 == single);

    double a = repa_loss_single(t, span, h1, t1).item();
    double b = repa_loss_single(t, span, h2, t2).item();
    double m2 = repa_loss_multi(t, span, {h1, h2}, {t1, t2}).item();
    CHECK(m2 == doctest::Approx((a + b) / 2.0).epsilon(1e-12));

    CHECK_THROWS_WITH_AS(repa_loss_multi(t, span, {h1, h2}, {t2, t1}),
                         doctest::Contains("mismatch"), Error);
}

TEST_CASE("multi-encoder loss: M=3 identity targets give -1") {
    const int D = 8, K = 4;
    Tensor rows = constant_rows(K, D, 0.7);
    std::vector<ProjectionHead> heads;
    std::vector<EncoderFeatures> targets;
    for (const char* n : {"a", "b", "c"}) {
        heads.push_back(identity_head(n, D));
        targets.push_back(feat(n, rows.detached()));
    }
    Tape t;
    CHECK(repa_loss_multi(t, rows, heads, targets).item() ==
          doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("batch alignment: mean of equals, empty error, hand-unrolled oracle") {
    Rng rng(23);
    const int K = 4, dm = 6, D = 5;
    auto head = ProjectionHead::init("e", dm, D, 3);
    std::vector<ProjectionHead> heads{head};

    SegmentAlignment s1{randt(rng, {K, dm}), {feat("e", randt(rng, {4, D}))}};
    SegmentAlignment s2{s1.tapped_span, {s1.targets[0]}};
    Tape t;
    double l1 = repa_loss_single(t, s1.tapped_span, head, s1.targets[0]).item();
    double batch = batch_alignment_loss(t, {s1, s2}, heads).item();
    CHECK(batch == doctest::Approx(l1).epsilon(1e-12));

    CHECK_THROWS_WITH_AS(batch_alignment_loss(t, {}, heads), doctest::Contains("empty"), Error);

    // two distinct segments: mean computed by hand over segments and patches
    SegmentAlignment s3{randt(rng, {K, dm}), {feat("e", randt(rng, {4, D}))}};
    double l3 = repa_loss_single(t, s3.tapped_span, head, s3.targets[0]).item();
    std::vector<double> per_enc;
    double b2 = batch_alignment_loss(t, {s1, s3}, heads, &per_enc).item();
    CHECK(b2 == doctest::Approx((l1 + l3) / 2.0).epsilon(1e-12));
    REQUIRE(per_enc.size() == 1);
    CHECK(per_enc[0] == doctest::Approx(b2).epsilon(1e-12));

    // K=1 spans are skipped
    SegmentAlignment k1{randt(rng, {1, dm}), {feat("e", randt(rng, {4, D}))}};
    CHECK(batch_alignment_loss(t, {s1, k1}, heads).item() == doctest::Approx(l1).epsilon(1e-12));
    CHECK_THROWS_AS(batch_alignment_loss(t, {k1}, heads), Error);
}

TEST_CASE("scale invariance of targets: value and tapped-gradient unchanged") {
    Rng rng(29);
    const int K = 4, dm = 6, D = 5;
    auto head = ProjectionHead::init("e", dm, D, 7);
    Tensor span0 = randt(rng, {K, dm});
    Tensor tgt = randt(rng, {4, D});

    auto run = [&](double alpha) {
        Tensor scaled = Tensor::zeros({4, D});
        for (int64_t i = 0; i < tgt.size(); ++i) scaled.mut()[i] = tgt.data()[i] * alpha;
        Tape tape;
        Tensor span = span0;
        span.node = tape.leaf(span.size());
        Tensor loss = repa_loss_single(tape, span, head, feat("e", scaled));
        tape.backward(loss.node);
        return std::make_pair(loss.item(), tape.grad(span.node));
    };
    auto [v1, g1] = run(1.0);
    auto [v2, g2] = run(137.5);
    CHECK(std::abs(v1 - v2) < 1e-10);
    for (size_t i = 0; i < g1.size(); ++i) CHECK(std::abs(g1[i] - g2[i]) < 1e-10);
}

TEST_CASE("loss bounds and frozen targets") {
    Rng rng(31);
    const int K = 9, dm = 8, D = 6;
    auto head = ProjectionHead::init("e", dm, D, 11);
    for (int trial = 0; trial < 20; ++trial) {
        Tape t;
        Tensor span = randt(rng, {K, dm});
        span.node = t.leaf(span.size());
        EncoderFeatures target = feat("e", randt(rng, {9, D}));
        REQUIRE(target.features.node == -1);  // encoder output is never on the tape
        Tensor loss = repa_loss_single(t, span, head, target);
        CHECK(loss.item() >= -1.0 - 1e-12);
        CHECK(loss.item() <= 1.0 + 1e-12);
        t.backward(loss.node);
        CHECK(t.has_grad(span.node));  // gradient reaches the model side only
    }

    // a target somehow living on a tape is rejected outright
    Tape t;
    Tensor span = randt(rng, {K, dm});
    EncoderFeatures bad = feat("e", randt(rng, {9, D}));
    bad.features.node = t.leaf(bad.features.size());
    CHECK_THROWS_WITH_AS(repa_loss_single(t, span, head, bad), doctest::Contains("frozen"), Error);
}
