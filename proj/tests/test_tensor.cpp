#include <doctest.h>

#include <cmath>
#include <cstring>

#include "fd_check.hpp"
#include "valr/rng.hpp"
#include "valr/tensor.hpp"

using namespace valr;
using valr::test::fd_max_rel_err;
using valr::test::fd_rel_err_at;

namespace {

Tensor randt(Rng& rng, std::vector<int> shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t.mut()[i] = rng.gauss();
    return t;
}

// Runs fn twice: once with a tape to collect the analytic gradient of the
// scalar result w.r.t. `x`, then through the FD oracle.
double gradcheck(std::vector<int> shape, Rng& rng,
                 const std::function<Tensor(Tape&, const Tensor&)>& fn) {
    Tensor x0 = randt(rng, shape);
    std::vector<double> flat(x0.data(), x0.data() + x0.size());

    Tape tape;
    Tensor x = x0;
    x.node = tape.leaf(x.size());
    Tensor y = fn(tape, x);
    REQUIRE(y.size() == 1);
    tape.backward(y.node);
    std::vector<double> analytic = tape.grad(x.node);

    auto f = [&](const std::vector<double>& vals) {
        Tape t2;
        Tensor xx = Tensor::from(shape, vals);
        return fn(t2, xx).item();
    };
    return fd_max_rel_err(f, flat, analytic);
}

}  // namespace

TEST_CASE("matmul identity and zero cases") {
    Tape t;
    Tensor i2 = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor p = matmul(t, i2, i2);
    CHECK(std::memcmp(p.data(), i2.data(), 4 * sizeof(double)) == 0);

    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor z = Tensor::from({2, 1}, {0, 0});
    Tensor az = matmul(t, a, z);
    CHECK(az.at(0, 0) == 0.0);
    CHECK(az.at(1, 0) == 0.0);

    CHECK_THROWS_WITH_AS(matmul(t, a, Tensor::from({3, 1}, {1, 2, 3})),
                         doctest::Contains("[2x2]"), Error);
}

TEST_CASE("matmul gradient vs finite differences") {
    Rng rng(7);
    Tensor b = randt(rng, {4, 2});
    // d(sum(a*b))/d(a[0,0]) at 1e-6 relative
    Tensor a0 = randt(rng, {3, 4});
    std::vector<double> flat(a0.data(), a0.data() + a0.size());
    Tape tape;
    Tensor a = a0;
    a.node = tape.leaf(a.size());
    Tensor y = sum_all(tape, matmul(tape, a, b));
    tape.backward(y.node);
    double analytic00 = tape.grad(a.node)[0];
    auto f = [&](const std::vector<double>& vals) {
        Tape t2;
        return sum_all(t2, matmul(t2, Tensor::from({3, 4}, vals), b)).item();
    };
    CHECK(fd_rel_err_at(f, flat, 0, analytic00) < 1e-6);

    // full-gradient sweep, both operands
    double e = gradcheck({3, 4}, rng, [&](Tape& t, const Tensor& x) {
        return sum_all(t, mul(t, matmul(t, x, b), matmul(t, x, b)));
    });
    CHECK(e < 1e-5);
}

TEST_CASE("softmax_rows examples") {
    Tape t;
    Tensor u = softmax_rows(t, Tensor::from({1, 3}, {0, 0, 0}));
    for (int j = 0; j < 3; ++j) CHECK(u.at(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-12));

    Tensor big = softmax_rows(t, Tensor::from({1, 2}, {1000, 0}));
    CHECK(big.at(0, 0) == doctest::Approx(1.0));
    CHECK(big.at(0, 1) < 1e-300);
    CHECK(std::isfinite(big.at(0, 0)));

    Rng rng(11);
    Tensor r = softmax_rows(t, randt(rng, {5, 9}));
    for (int i = 0; i < 5; ++i) {
        double s = 0;
        for (int j = 0; j < 9; ++j) {
            s += r.at(i, j);
            CHECK(r.at(i, j) >= 0.0);
        }
        CHECK(std::abs(s - 1.0) < 1e-12);
    }

    Tensor nan_in = Tensor::from({1, 2}, {std::nan(""), 0.0});
    CHECK_THROWS_AS(softmax_rows(t, nan_in), Error);
}

TEST_CASE("softmax_rows gradient") {
    Rng rng(13);
    double e = gradcheck({2, 5}, rng, [](Tape& t, const Tensor& x) {
        Tensor y = softmax_rows(t, x);
        return sum_all(t, mul(t, y, y));  // non-trivial weighting of rows
    });
    CHECK(e < 1e-6);
}

TEST_CASE("cosine_sim examples") {
    Tape t;
    Tensor u = Tensor::from({3}, {1, 2, 3});
    CHECK(cosine_sim(t, u, u).item() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cosine_sim(t, Tensor::from({2}, {1, 0}), Tensor::from({2}, {0, 1})).item() == 0.0);
    CHECK(cosine_sim(t, Tensor::from({2}, {1, 0}), Tensor::from({2}, {-1, 0})).item() ==
          doctest::Approx(-1.0).epsilon(1e-12));
    CHECK_THROWS_WITH_AS(cosine_sim(t, Tensor::from({3}, {0, 0, 0}), u.detached()),
                         doctest::Contains("degenerate"), Error);
}

TEST_CASE("cosine_sim gradient both sides") {
    Rng rng(17);
    Tensor v = randt(rng, {6});
    double e = gradcheck({6}, rng, [&](Tape& t, const Tensor& x) { return cosine_sim(t, x, v); });
    CHECK(e < 1e-5);
    double e2 = gradcheck({6}, rng, [&](Tape& t, const Tensor& x) { return cosine_sim(t, v, x); });
    CHECK(e2 < 1e-5);
}

TEST_CASE("cross_entropy examples") {
    Tape t;
    // uniform logits, V=7 -> ln 7
    Tensor l = Tensor::zeros({2, 7});
    Tensor ce = cross_entropy(t, l, {3, 5}, {1, 1});
    CHECK(ce.item() == doctest::Approx(std::log(7.0)).epsilon(1e-12));

    // one-hot-correct with margin 20 -> loss < 1e-8
    Tensor sat = Tensor::zeros({1, 4});
    sat.mut()[2] = 20.0;
    CHECK(cross_entropy(t, sat, {2}, {1}).item() < 1e-8);

    CHECK_THROWS_WITH_AS(cross_entropy(t, l, {0, 0}, {0, 0}), doctest::Contains("empty"), Error);
    CHECK_THROWS_AS(cross_entropy(t, l, {7, 0}, {1, 1}), Error);
}

TEST_CASE("cross_entropy gradient") {
    Rng rng(19);
    std::vector<int> targets{4, 0, 10};
    std::vector<uint8_t> mask{1, 0, 1};
    Tensor x0 = randt(rng, {3, 11});
    std::vector<double> flat(x0.data(), x0.data() + x0.size());
    Tape tape;
    Tensor x = x0;
    x.node = tape.leaf(x.size());
    Tensor y = cross_entropy(tape, x, targets, mask);
    tape.backward(y.node);
    auto analytic = tape.grad(x.node);
    auto f = [&](const std::vector<double>& vals) {
        Tape t2;
        return cross_entropy(t2, Tensor::from({3, 11}, vals), targets, mask).item();
    };
    CHECK(fd_max_rel_err(f, flat, analytic) < 1e-5);
}

TEST_CASE("elementwise and structural op gradients") {
    Rng rng(23);
    Tensor c = randt(rng, {3, 4});

    CHECK(gradcheck({3, 4}, rng, [&](Tape& t, const Tensor& x) {
              return sum_all(t, mul(t, add(t, x, c), sub(t, x, c)));
          }) < 1e-5);

    CHECK(gradcheck({3, 4}, rng, [](Tape& t, const Tensor& x) {
              return mean_all(t, gelu(t, x));
          }) < 1e-5);

    CHECK(gradcheck({3, 4}, rng, [](Tape& t, const Tensor& x) {
              Tensor y = transpose(t, x);
              return sum_all(t, mul(t, y, y));
          }) < 1e-5);

    CHECK(gradcheck({3, 4}, rng, [](Tape& t, const Tensor& x) {
              Tensor y = reshape(t, x, {2, 6});
              return sum_all(t, mul(t, y, y));
          }) < 1e-5);

    CHECK(gradcheck({4, 3}, rng, [](Tape& t, const Tensor& x) {
              Tensor top = slice_rows(t, x, 0, 2);
              Tensor bot = slice_rows(t, x, 2, 4);
              Tensor back = concat_rows(t, {bot, top});
              Tensor left = slice_cols(t, back, 0, 1);
              Tensor right = slice_cols(t, back, 1, 3);
              Tensor re = concat_cols(t, {right, left});
              return sum_all(t, mul(t, re, re));
          }) < 1e-5);

    Tensor row = randt(rng, {4});
    CHECK(gradcheck({3, 4}, rng, [&](Tape& t, const Tensor& x) {
              Tensor y = add_row_broadcast(t, x, row);
              return sum_all(t, mul(t, y, y));
          }) < 1e-5);
    CHECK(gradcheck({4}, rng, [&](Tape& t, const Tensor& r) {
              Tensor y = add_row_broadcast(t, c, r);
              return sum_all(t, mul(t, y, y));
          }) < 1e-5);

    CHECK(gradcheck({5, 3}, rng, [](Tape& t, const Tensor& x) {
              Tensor y = gather_rows(t, x, {4, 0, 0, 2});
              return sum_all(t, mul(t, y, y));
          }) < 1e-5);
}

TEST_CASE("layer_norm gradient w.r.t. input, gain and bias") {
    Rng rng(29);
    Tensor gain = randt(rng, {5});
    Tensor bias = randt(rng, {5});
    CHECK(gradcheck({3, 5}, rng, [&](Tape& t, const Tensor& x) {
              Tensor y = layer_norm(t, x, gain, bias);
              return sum_all(t, mul(t, y, y));
          }) < 1e-5);
    Tensor x = randt(rng, {3, 5});
    CHECK(gradcheck({5}, rng, [&](Tape& t, const Tensor& g) {
              Tensor y = layer_norm(t, x, g, bias);
              return sum_all(t, mul(t, y, y));
          }) < 1e-5);
    CHECK(gradcheck({5}, rng, [&](Tape& t, const Tensor& b) {
              Tensor y = layer_norm(t, x, gain, b);
              return sum_all(t, mul(t, y, y));
          }) < 1e-5);
}

TEST_CASE("attention score/mix gradients") {
    Rng rng(31);
    const int heads = 2;
    Tensor k = randt(rng, {5, 6});
    Tensor v = randt(rng, {5, 6});
    CHECK(gradcheck({3, 6}, rng, [&](Tape& t, const Tensor& q) {
              Tensor s = attn_scores(t, q, k, heads, 0.5);
              Tensor p = softmax_rows(t, s);
              Tensor o = attn_mix(t, p, v, heads);
              return sum_all(t, mul(t, o, o));
          }) < 1e-5);
    Tensor q = randt(rng, {3, 6});
    CHECK(gradcheck({5, 6}, rng, [&](Tape& t, const Tensor& kk) {
              Tensor s = attn_scores(t, q, kk, heads, 0.5);
              Tensor p = softmax_rows(t, s);
              Tensor o = attn_mix(t, p, v, heads);
              return sum_all(t, mul(t, o, o));
          }) < 1e-5);
    CHECK(gradcheck({5, 6}, rng, [&](Tape& t, const Tensor& vv) {
              Tensor s = attn_scores(t, q, k, heads, 0.5);
              Tensor p = softmax_rows(t, s);
              Tensor o = attn_mix(t, p, vv, heads);
              return sum_all(t, mul(t, o, o));
          }) < 1e-5);
}

TEST_CASE("causal mask blocks strictly-future keys") {
    Tensor m = causal_mask(2, 2, 5, 2);  // rows at absolute positions 2,3
    REQUIRE(m.shape == std::vector<int>{4, 5});
    for (int h = 0; h < 2; ++h) {
        for (int j = 0; j <= 2; ++j) CHECK(m.at(0 * 2 + h, j) == 0.0);
        for (int j = 3; j < 5; ++j) CHECK(m.at(0 * 2 + h, j) == -1e30);
        for (int j = 0; j <= 3; ++j) CHECK(m.at(1 * 2 + h, j) == 0.0);
        CHECK(m.at(1 * 2 + h, 4) == -1e30);
    }
}

TEST_CASE("cosine_rows_floored: zero row gives zero similarity and zero gradient") {
    Tape t;
    Tensor a = Tensor::from({2, 3}, {0, 0, 0, 1, 2, 2});
    Tensor b = Tensor::from({2, 3}, {1, 1, 1, 2, 4, 4});
    Tensor a_t = a;
    a_t.node = t.leaf(a.size());
    Tensor sims = cosine_rows_floored(t, a_t, b);
    CHECK(sims.at(0) == 0.0);
    CHECK(sims.at(1) == doctest::Approx(1.0).epsilon(1e-12));
    Tensor loss = sum_all(t, sims);
    t.backward(loss.node);
    auto g = t.grad(a_t.node);
    for (int j = 0; j < 3; ++j) CHECK(g[size_t(j)] == 0.0);  // floored row untouched

    Rng rng(37);
    Tensor tgt = randt(rng, {4, 5});
    CHECK(gradcheck({4, 5}, rng, [&](Tape& tp, const Tensor& x) {
              return mean_all(tp, cosine_rows_floored(tp, x, tgt));
          }) < 1e-5);
}

TEST_CASE("tape composite backward equals manual per-op composition") {
    Rng rng(41);
    Tensor a0 = randt(rng, {2, 3});
    Tensor b = randt(rng, {3, 4});

    Tape tape;
    Tensor a = a0;
    a.node = tape.leaf(a.size());
    Tensor y = softmax_rows(tape, matmul(tape, a, b));
    Tensor s = sum_all(tape, mul(tape, y, y));
    tape.backward(s.node);
    auto tape_grad = tape.grad(a.node);

    // manual composition: dL/dy -> softmax backward -> matmul backward
    std::vector<double> dy(size_t(y.size()));
    for (int64_t i = 0; i < y.size(); ++i) dy[size_t(i)] = 2.0 * y.data()[size_t(i)];
    std::vector<double> dz(size_t(y.size()));
    for (int i = 0; i < 2; ++i) {
        double dot = 0;
        for (int j = 0; j < 4; ++j) dot += dy[size_t(i * 4 + j)] * y.at(i, j);
        for (int j = 0; j < 4; ++j)
            dz[size_t(i * 4 + j)] = y.at(i, j) * (dy[size_t(i * 4 + j)] - dot);
    }
    std::vector<double> da(6, 0.0);
    for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 3; ++k)
            for (int j = 0; j < 4; ++j) da[size_t(i * 3 + k)] += dz[size_t(i * 4 + j)] * b.at(k, j);

    for (size_t i = 0; i < da.size(); ++i)
        CHECK(tape_grad[i] == doctest::Approx(da[i]).epsilon(1e-12));
}

TEST_CASE("ops are deterministic given identical inputs") {
    Rng rng(43);
    Tensor a = randt(rng, {4, 4});
    Tensor b = randt(rng, {4, 4});
    Tape t;
    Tensor y1 = softmax_rows(t, matmul(t, a, b));
    Tensor y2 = softmax_rows(t, matmul(t, a, b));
    CHECK(std::memcmp(y1.data(), y2.data(), size_t(y1.size()) * sizeof(double)) == 0);
}

TEST_CASE("tape node inputs precede the node itself") {
    Tape t;
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    a.node = t.leaf(a.size());
    Tensor y = mul(t, a, a);
    Tensor z = sum_all(t, y);
    REQUIRE(z.node > y.node);
    for (int in : t.inputs(z.node)) CHECK(in < z.node);
    for (int in : t.inputs(y.node)) CHECK(in < y.node);
}
