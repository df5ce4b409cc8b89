#include <doctest.h>

#include <cmath>
#include <functional>

#include "tppt/optim.hpp"
#include "tppt/rng.hpp"
#include "tppt/tape.hpp"
#include "tppt/tensor.hpp"

using namespace tppt;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
    return t;
}

std::vector<double> random_coeffs(std::int64_t n, Rng& rng) {
    std::vector<double> w(static_cast<std::size_t>(n));
    for (auto& v : w) v = rng.normal();
    return w;
}

// Finite-difference check of one op: loss = sum_i c_i * op(x)_i.
double fd_max_rel_err(const std::function<int(Tape&, int)>& build, const Tensor& x0,
                      std::uint64_t seed, double h = 1e-5) {
    Parameter x("x", x0);
    Rng rng(mix_seed(seed, 0xfd));
    std::vector<double> coeffs;
    {
        Tape probe;
        const int out = build(probe, probe.param(x));
        coeffs = random_coeffs(probe.value(out).numel(), rng);
    }
    const auto loss = [&]() {
        Tape tape;
        const int out = build(tape, tape.param(x));
        return tape.value(tape.weighted_sum(out, coeffs))[0];
    };
    const auto backward = [&]() {
        Tape tape;
        const int out = build(tape, tape.param(x));
        tape.backward(tape.weighted_sum(out, coeffs));
    };
    std::vector<Parameter*> params{&x};
    return grad_check(loss, backward, params, h, 400, seed).max_rel_err;
}

} // namespace

TEST_CASE("silu values: origin fixed point and saturation") {
    Tape tape;
    const int x = tape.constant(Tensor({3}, {0.0, 20.0, -20.0}));
    const Tensor& y = tape.value(tape.silu(x));
    CHECK(y[0] == 0.0);
    CHECK(std::abs(y[1] - 20.0) < 1e-6);
    CHECK(std::abs(y[2]) < 1e-6);
}

TEST_CASE("silu gradient matches central differences") {
    Rng rng(11);
    const double err = fd_max_rel_err([](Tape& t, int x) { return t.silu(x); },
                                      random_tensor({4, 5}, rng, 2.0), 11, 1e-5);
    CHECK(err < 1e-7);
}

TEST_CASE("layer_norm normalizes rows") {
    Rng rng(12);
    const Tensor x = random_tensor({6, 16}, rng, 3.0);
    Parameter gain("g", Tensor::full({16}, 1.0));
    Parameter bias("b", Tensor::zeros({16}));
    Tape tape;
    const int y = tape.layer_norm(tape.constant(x), tape.param(gain), tape.param(bias));
    const Tensor& out = tape.value(y);
    for (std::int64_t r = 0; r < 6; ++r) {
        double mean = 0.0, var = 0.0;
        for (std::int64_t j = 0; j < 16; ++j) mean += out.at(r, j);
        mean /= 16.0;
        for (std::int64_t j = 0; j < 16; ++j) var += (out.at(r, j) - mean) * (out.at(r, j) - mean);
        var /= 16.0;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(var - 1.0) < 1e-4); // eps-adjusted
    }
}

TEST_CASE("layer_norm maps constant rows to zero before affine") {
    Parameter gain("g", Tensor::full({8}, 1.0));
    Parameter bias("b", Tensor::zeros({8}));
    Tape tape;
    const int y = tape.layer_norm(tape.constant(Tensor::full({2, 8}, 3.25)), tape.param(gain),
                                  tape.param(bias));
    for (std::int64_t i = 0; i < 16; ++i) CHECK(tape.value(y)[i] == 0.0);
}

TEST_CASE("layer_norm gradient matches central differences") {
    Rng rng(13);
    Parameter gain("g", random_tensor({6}, rng, 0.5));
    Parameter bias("b", random_tensor({6}, rng, 0.5));
    const double err = fd_max_rel_err(
        [&](Tape& t, int x) { return t.layer_norm(x, t.param(gain), t.param(bias)); },
        random_tensor({5, 6}, rng, 2.0), 13, 1e-5);
    CHECK(err < 1e-6);
}

TEST_CASE("softmax closed forms") {
    Tape tape;
    const int a = tape.softmax(tape.constant(Tensor({1, 2}, {0.0, 0.0})));
    CHECK(tape.value(a)[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(tape.value(a)[1] == doctest::Approx(0.5).epsilon(1e-12));

    const int b = tape.softmax(tape.constant(
        Tensor({1, 3}, {std::log(1.0), std::log(2.0), std::log(3.0)})));
    CHECK(tape.value(b)[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(tape.value(b)[1] == doctest::Approx(2.0 / 6.0).epsilon(1e-12));
    CHECK(tape.value(b)[2] == doctest::Approx(3.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("softmax shift invariance and simplex property") {
    Rng rng(14);
    const Tensor x = random_tensor({7, 9}, rng, 3.0);
    Tensor shifted = x;
    for (std::int64_t r = 0; r < 7; ++r) {
        for (std::int64_t j = 0; j < 9; ++j) shifted.at(r, j) += 17.5;
    }
    Tape tape;
    const Tensor& a = tape.value(tape.softmax(tape.constant(x)));
    const Tensor& b = tape.value(tape.softmax(tape.constant(shifted)));
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
        CHECK(a[i] >= 0.0);
    }
    for (std::int64_t r = 0; r < 7; ++r) {
        double sum = 0.0;
        for (std::int64_t j = 0; j < 9; ++j) sum += a.at(r, j);
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("softmax gradient matches central differences") {
    Rng rng(15);
    const double err = fd_max_rel_err([](Tape& t, int x) { return t.softmax(x); },
                                      random_tensor({4, 6}, rng, 2.0), 15, 1e-5);
    CHECK(err < 1e-6);
}

TEST_CASE("linear gradient matches central differences in inputs and weights") {
    Rng rng(16);
    Parameter w("w", random_tensor({5, 3}, rng, 0.7));
    Parameter b("b", random_tensor({3}, rng, 0.7));
    const double err_x = fd_max_rel_err(
        [&](Tape& t, int x) { return t.linear(x, t.param(w), t.param(b)); },
        random_tensor({4, 5}, rng), 16, 1e-5);
    CHECK(err_x < 1e-8);

    // weight gradients via a closure over w
    Parameter x("x", random_tensor({4, 5}, rng));
    std::vector<double> coeffs = random_coeffs(12, rng);
    const auto loss = [&]() {
        Tape t;
        const int y = t.linear(t.param(x), t.param(w), t.param(b));
        return t.value(t.weighted_sum(y, coeffs))[0];
    };
    const auto backward = [&]() {
        Tape t;
        const int y = t.linear(t.param(x), t.param(w), t.param(b));
        t.backward(t.weighted_sum(y, coeffs));
    };
    std::vector<Parameter*> params{&w, &b, &x};
    CHECK(grad_check(loss, backward, params, 1e-5, 400, 16).max_rel_err < 1e-8);
}

namespace {

// Plain-loop attention oracle, independent of the tape implementation.
Tensor naive_attention(const Tensor& q_src, const Tensor& kv_src, const Tensor& wq, const Tensor& wk,
                       const Tensor& wv, const Tensor& wo, int H) {
    const std::int64_t B = q_src.dim(0), Tq = q_src.dim(1), C = q_src.dim(2);
    const std::int64_t Tk = kv_src.dim(1);
    const std::int64_t Ck = wk.dim(1);
    const std::int64_t Dh = C / H;
    const bool per_head = Ck == C;

    const auto project = [](const Tensor& x, const Tensor& w) {
        Tensor y({x.dim(0), x.dim(1), w.dim(1)});
        for (std::int64_t b = 0; b < x.dim(0); ++b) {
            for (std::int64_t i = 0; i < x.dim(1); ++i) {
                for (std::int64_t o = 0; o < w.dim(1); ++o) {
                    double acc = 0.0;
                    for (std::int64_t c = 0; c < x.dim(2); ++c) {
                        acc += x[(b * x.dim(1) + i) * x.dim(2) + c] * w.at(c, o);
                    }
                    y[(b * x.dim(1) + i) * w.dim(1) + o] = acc;
                }
            }
        }
        return y;
    };
    const Tensor q = project(q_src, wq);
    const Tensor k = project(kv_src, wk);
    const Tensor v = project(kv_src, wv);

    Tensor concat({B, Tq, C});
    for (std::int64_t b = 0; b < B; ++b) {
        for (int h = 0; h < H; ++h) {
            const std::int64_t qoff = h * Dh;
            const std::int64_t koff = per_head ? h * Dh : 0;
            for (std::int64_t i = 0; i < Tq; ++i) {
                std::vector<double> scores(static_cast<std::size_t>(Tk));
                for (std::int64_t j = 0; j < Tk; ++j) {
                    double s = 0.0;
                    for (std::int64_t d = 0; d < Dh; ++d) {
                        s += q[(b * Tq + i) * C + qoff + d] * k[(b * Tk + j) * Ck + koff + d];
                    }
                    scores[static_cast<std::size_t>(j)] = s / std::sqrt(static_cast<double>(Dh));
                }
                double mx = scores[0];
                for (double s : scores) mx = std::max(mx, s);
                double sum = 0.0;
                for (auto& s : scores) {
                    s = std::exp(s - mx);
                    sum += s;
                }
                for (auto& s : scores) s /= sum;
                for (std::int64_t d = 0; d < Dh; ++d) {
                    double acc = 0.0;
                    for (std::int64_t j = 0; j < Tk; ++j) {
                        acc += scores[static_cast<std::size_t>(j)] * v[(b * Tk + j) * Ck + koff + d];
                    }
                    concat[(b * Tq + i) * C + qoff + d] = acc;
                }
            }
        }
    }
    return project(concat, wo);
}

Tensor tape_attention(const Tensor& q_src, const Tensor& kv_src, Parameter& wq, Parameter& wk,
                      Parameter& wv, Parameter& wo, int H) {
    Tape tape;
    const int q = tape.linear(tape.constant(q_src), tape.param(wq));
    const int k = tape.linear(tape.constant(kv_src), tape.param(wk));
    const int v = tape.linear(tape.constant(kv_src), tape.param(wv));
    const int o = tape.sdpa(q, k, v, H);
    return tape.value(tape.linear(o, tape.param(wo)));
}

} // namespace

TEST_CASE("attention matches a naive dense oracle (multi-head and multi-query)") {
    Rng rng(17);
    const int C = 8, H = 2;
    const Tensor q_src = random_tensor({2, 3, C}, rng);
    const Tensor kv_src = random_tensor({2, 4, C}, rng);

    Parameter wq("wq", random_tensor({C, C}, rng, 0.6));
    Parameter wo("wo", random_tensor({C, C}, rng, 0.6));

    SUBCASE("multi-head") {
        Parameter wk("wk", random_tensor({C, C}, rng, 0.6));
        Parameter wv("wv", random_tensor({C, C}, rng, 0.6));
        const Tensor got = tape_attention(q_src, kv_src, wq, wk, wv, wo, H);
        const Tensor want = naive_attention(q_src, kv_src, wq.value, wk.value, wv.value, wo.value, H);
        for (std::int64_t i = 0; i < got.numel(); ++i) {
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
    SUBCASE("multi-query: one shared key/value head") {
        Parameter wk("wk", random_tensor({C, C / H}, rng, 0.6));
        Parameter wv("wv", random_tensor({C, C / H}, rng, 0.6));
        const Tensor got = tape_attention(q_src, kv_src, wq, wk, wv, wo, H);
        const Tensor want = naive_attention(q_src, kv_src, wq.value, wk.value, wv.value, wo.value, H);
        for (std::int64_t i = 0; i < got.numel(); ++i) {
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("attention over a single key/value token returns its value projection") {
    Rng rng(18);
    const int C = 6, H = 3;
    const Tensor q_src = random_tensor({1, 5, C}, rng);
    const Tensor kv_src = random_tensor({1, 1, C}, rng);
    Parameter wq("wq", random_tensor({C, C}, rng));
    Parameter wk("wk", random_tensor({C, C}, rng));
    Parameter wv("wv", random_tensor({C, C}, rng));
    Parameter wo("wo", random_tensor({C, C}, rng));
    const Tensor out = tape_attention(q_src, kv_src, wq, wk, wv, wo, H);

    // expected: value projection of the token, through the output projection
    Tensor vtok({1, C});
    for (int o = 0; o < C; ++o) {
        double acc = 0.0;
        for (int c = 0; c < C; ++c) acc += kv_src[c] * wv.value.at(c, o);
        vtok[o] = acc;
    }
    Tensor expected({1, C});
    for (int o = 0; o < C; ++o) {
        double acc = 0.0;
        for (int c = 0; c < C; ++c) acc += vtok[c] * wo.value.at(c, o);
        expected[o] = acc;
    }
    for (std::int64_t i = 0; i < 5; ++i) {
        for (int c = 0; c < C; ++c) {
            CHECK(out[i * C + c] == doctest::Approx(expected[c]).epsilon(1e-12));
        }
    }
}

TEST_CASE("sdpa with shared rank-2 keys equals per-sample stacked keys") {
    Rng rng(19);
    const int C = 8, H = 2;
    const Tensor q_src = random_tensor({3, 4, C}, rng);
    const Tensor kv2 = random_tensor({5, C / H}, rng);
    Tensor kv3({3, 5, C / H});
    for (int b = 0; b < 3; ++b) {
        for (std::int64_t i = 0; i < kv2.numel(); ++i) kv3[b * kv2.numel() + i] = kv2[i];
    }
    Tape tape;
    const int q = tape.constant(q_src);
    const int shared = tape.sdpa(q, tape.constant(kv2), tape.constant(kv2), H);
    const int stacked = tape.sdpa(q, tape.constant(kv3), tape.constant(kv3), H);
    for (std::int64_t i = 0; i < tape.value(shared).numel(); ++i) {
        CHECK(tape.value(shared)[i] == doctest::Approx(tape.value(stacked)[i]).epsilon(1e-14));
    }
}

TEST_CASE("sdpa gradient matches central differences") {
    Rng rng(20);
    const int C = 6, H = 2;
    Parameter k("k", random_tensor({2, 3, C}, rng));
    Parameter v("v", random_tensor({2, 3, C}, rng));
    const double err_q = fd_max_rel_err(
        [&](Tape& t, int x) { return t.sdpa(x, t.param(k), t.param(v), H); },
        random_tensor({2, 4, C}, rng), 20, 1e-5);
    CHECK(err_q < 1e-6);

    // shared multi-query keys, gradient through k and v
    Parameter q("q", random_tensor({2, 4, C}, rng));
    Parameter k2("k2", random_tensor({3, C / H}, rng));
    Parameter v2("v2", random_tensor({3, C / H}, rng));
    Rng crng(21);
    std::vector<double> coeffs = random_coeffs(2 * 4 * C, crng);
    const auto loss = [&]() {
        Tape t;
        const int y = t.sdpa(t.param(q), t.param(k2), t.param(v2), H);
        return t.value(t.weighted_sum(y, coeffs))[0];
    };
    const auto backward = [&]() {
        Tape t;
        const int y = t.sdpa(t.param(q), t.param(k2), t.param(v2), H);
        t.backward(t.weighted_sum(y, coeffs));
    };
    std::vector<Parameter*> params{&q, &k2, &v2};
    CHECK(grad_check(loss, backward, params, 1e-5, 400, 21).max_rel_err < 1e-6);
}

TEST_CASE("group_mean and mask_rows gradients match central differences") {
    Rng rng(22);
    std::vector<double> mask{1, 1, 0, 1, 0, 0, 1, 1};
    const double err_pool = fd_max_rel_err(
        [&](Tape& t, int x) { return t.group_mean(x, mask, 2); },
        random_tensor({8, 5}, rng), 22, 1e-5);
    CHECK(err_pool < 1e-8);
    const double err_mask = fd_max_rel_err(
        [&](Tape& t, int x) { return t.mask_rows(x, mask); },
        random_tensor({8, 5}, rng), 23, 1e-5);
    CHECK(err_mask < 1e-8);
}

TEST_CASE("group_mean averages only unmasked rows and zeroes empty groups") {
    Tensor x({4, 2}, {1.0, 10.0, 3.0, 30.0, 5.0, 50.0, 7.0, 70.0});
    Tape tape;
    const int y = tape.group_mean(tape.constant(x), {1, 1, 0, 0}, 2);
    const Tensor& out = tape.value(y);
    CHECK(out.at(0, 0) == doctest::Approx(2.0));
    CHECK(out.at(0, 1) == doctest::Approx(20.0));
    CHECK(out.at(1, 0) == 0.0);
    CHECK(out.at(1, 1) == 0.0);
}

TEST_CASE("cross entropy closed forms") {
    // perfect prediction: loss 0
    Tape tape;
    const int perfect = tape.cross_entropy_sum(
        tape.constant(Tensor({2, 3}, {1.0, 0.0, 0.0, 0.0, 1.0, 0.0})), {0, 1}, {1.0, 1.0});
    CHECK(tape.value(perfect)[0] == 0.0);

    // uniform over 4 classes, one real step: ln 4
    const int uniform = tape.cross_entropy_sum(
        tape.constant(Tensor({1, 4}, {0.25, 0.25, 0.25, 0.25})), {2}, {1.0});
    CHECK(tape.value(uniform)[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    // padding steps contribute with weight 1e-4
    const int pad = tape.cross_entropy_sum(
        tape.constant(Tensor({1, 4}, {0.25, 0.25, 0.25, 0.25})), {0}, {0.0001});
    CHECK(tape.value(pad)[0] == doctest::Approx(0.0001 * std::log(4.0)).epsilon(1e-12));

    // machine-zero probabilities clamp at -30 instead of producing inf
    const int clamped = tape.cross_entropy_sum(
        tape.constant(Tensor({1, 2}, {0.0, 1.0})), {0}, {1.0});
    CHECK(tape.value(clamped)[0] == doctest::Approx(30.0));
}

TEST_CASE("fan-out accumulates gradients additively") {
    Parameter x("x", Tensor({2}, {0.7, -1.3}));
    Tape tape;
    const int xn = tape.param(x);
    const int a = tape.silu(xn);
    const int b = tape.silu(xn);
    const int sum = tape.add(a, b);
    tape.backward(tape.weighted_sum(sum, {1.0, 1.0}));

    Tape single;
    Parameter x2("x2", Tensor({2}, {0.7, -1.3}));
    const int y = single.silu(single.param(x2));
    single.backward(single.weighted_sum(y, {1.0, 1.0}));

    for (int i = 0; i < 2; ++i) {
        CHECK(x.grad[i] == doctest::Approx(2.0 * x2.grad[i]).epsilon(1e-14));
    }
}

TEST_CASE("sgd_step updates and zeroes gradients") {
    Parameter p("p", Tensor({1}, {1.0}));
    p.grad[0] = 2.0;
    std::vector<Parameter*> params{&p};
    sgd_step(params, 0.1);
    CHECK(p.value[0] == doctest::Approx(0.8));
    CHECK(p.grad[0] == 0.0);

    p.grad[0] = 5.0;
    sgd_step(params, 0.0);
    CHECK(p.value[0] == doctest::Approx(0.8)); // lr = 0 leaves values alone
}

TEST_CASE("sgd on a quadratic bowl contracts geometrically") {
    Parameter p("p", Tensor({1}, {1.0}));
    std::vector<Parameter*> params{&p};
    for (int step = 0; step < 100; ++step) {
        p.grad[0] = 2.0 * p.value[0]; // d/dp p^2
        sgd_step(params, 0.1);
    }
    CHECK(std::abs(p.value[0]) < 1e-9);
}

TEST_CASE("cosine schedule endpoints and midpoint") {
    CHECK(cosine_lr(0, 100, 0.01) == doctest::Approx(0.01));
    CHECK(cosine_lr(100, 100, 0.01) == doctest::Approx(0.0));
    CHECK(cosine_lr(50, 100, 0.01) == doctest::Approx(0.005));
}

TEST_CASE("gradient clipping caps the global norm") {
    Parameter a("a", Tensor({2}, {0.0, 0.0}));
    Parameter b("b", Tensor({1}, {0.0}));
    a.grad = Tensor({2}, {3.0, 0.0});
    b.grad = Tensor({1}, {4.0});
    std::vector<Parameter*> params{&a, &b};
    const double norm = clip_grad_norm(params, 1.0);
    CHECK(norm == doctest::Approx(5.0));
    CHECK(a.grad[0] == doctest::Approx(0.6));
    CHECK(b.grad[0] == doctest::Approx(0.8));
}

TEST_CASE("grad_check on a pure linear model is exact to 1e-9") {
    Rng rng(30);
    Parameter w("w", random_tensor({4, 2}, rng));
    Parameter x("x", random_tensor({3, 4}, rng));
    std::vector<double> coeffs = random_coeffs(6, rng);
    const auto loss = [&]() {
        Tape t;
        return t.value(t.weighted_sum(t.linear(t.param(x), t.param(w)), coeffs))[0];
    };
    const auto backward = [&]() {
        Tape t;
        t.backward(t.weighted_sum(t.linear(t.param(x), t.param(w)), coeffs));
    };
    std::vector<Parameter*> params{&w, &x};
    CHECK(grad_check(loss, backward, params, 1e-4, 400, 30).max_rel_err < 1e-9);
}

TEST_CASE("grad_check at a saturated zero-loss point reports near-zero gradients") {
    // logits with a huge margin: softmax is numerically one-hot, the loss is
    // ~0 and the logit gradients vanish both analytically and numerically
    Parameter logits("logits", Tensor({1, 2}, {40.0, -40.0}));
    const auto loss = [&]() {
        Tape t;
        return t.value(t.cross_entropy_sum(t.softmax(t.param(logits)), {0}, {1.0}))[0];
    };
    const auto backward = [&]() {
        Tape t;
        t.backward(t.cross_entropy_sum(t.softmax(t.param(logits)), {0}, {1.0}));
    };
    std::vector<Parameter*> params{&logits};
    zero_grads(params);
    backward();
    CHECK(std::abs(loss()) < 1e-8);
    CHECK(std::abs(logits.grad[0]) < 1e-8);
    CHECK(std::abs(logits.grad[1]) < 1e-8);
    const GradCheckResult result = grad_check(loss, backward, params, 1e-4, 10, 31);
    CHECK(result.max_rel_err < 1e-6);
}
