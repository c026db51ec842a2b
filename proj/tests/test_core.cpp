#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "flownp/encoding.hpp"
#include "flownp/gradcheck.hpp"
#include "flownp/numerics.hpp"
#include "flownp/rng.hpp"
#include "flownp/schedule.hpp"
#include "flownp/tape.hpp"

using namespace flownp;

TEST_CASE("rng: identical identity replays identical sequences") {
    RngStream a(42, 7), b(42, 7);
    for (int i = 0; i < 1000; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    RngStream c(42, 7), d(42, 7);
    for (int i = 0; i < 100; ++i) {
        CHECK(c.normal() == d.normal());
        CHECK(c.uniform01() == d.uniform01());
    }
}

TEST_CASE("rng: distinct streams differ and derive() is stable") {
    RngStream a(42, 0), b(42, 1);
    int same = 0;
    for (int i = 0; i < 64; ++i) {
        if (a.next_u32() == b.next_u32()) ++same;
    }
    CHECK(same == 0);

    RngStream root(9, 3);
    CHECK(root.derive(5).stream_id() == RngStream(9, 3).derive(5).stream_id());
    std::set<std::uint64_t> ids;
    for (std::uint64_t k = 0; k < 1000; ++k) ids.insert(root.derive(k).stream_id());
    CHECK(ids.size() == 1000);
}

TEST_CASE("rng: uniform and normal moments") {
    RngStream r(1, 2);
    const int n = 200000;
    double su = 0, su2 = 0, sn = 0, sn2 = 0;
    for (int i = 0; i < n; ++i) {
        double u = r.uniform01();
        su += u;
        su2 += u * u;
        double z = r.normal();
        sn += z;
        sn2 += z * z;
    }
    CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(su2 / n == doctest::Approx(1.0 / 3).epsilon(0.02));
    CHECK(std::abs(sn / n) < 0.01);
    CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("rng: uniform_int bounds and coverage") {
    RngStream r(3, 4);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 7000; ++i) {
        auto v = r.uniform_int(std::int64_t(3), std::int64_t(9));
        REQUIRE(v >= 3);
        REQUIRE(v <= 9);
        counts[static_cast<std::size_t>(v - 3)]++;
    }
    for (int c : counts) CHECK(c > 700);
}

TEST_CASE("sinusoidal_encode: zero input gives sin 0 / cos 1") {
    Encoding enc{5, 0.5, 4.0};
    Vec v = sinusoidal_encode(0.0, enc);
    REQUIRE(v.size() == 10);
    for (int k = 0; k < 5; ++k) {
        CHECK(v[2 * k] == 0.0);
        CHECK(v[2 * k + 1] == 1.0);
    }
}

TEST_CASE("sinusoidal_encode: periodicity at the single configured frequency") {
    Encoding enc{1, 3.0, 3.0};
    Vec a = sinusoidal_encode(0.7, enc);
    Vec b = sinusoidal_encode(0.7 + 3.0, enc);
    CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-12));
    CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-12));
}

TEST_CASE("sinusoidal_encode: x=0.37, K=3, periods {1,2,4}") {
    // geometric frequencies 2*pi/4, 2*pi/2, 2*pi/1; values frozen from an
    // independent high-precision evaluation of the sin/cos formula.
    Encoding enc{3, 1.0, 4.0};
    Vec v = sinusoidal_encode(0.37, enc);
    REQUIRE(v.size() == 6);
    CHECK(v[0] == doctest::Approx(0.54902281799813174).epsilon(1e-14));
    CHECK(v[1] == doctest::Approx(0.83580736136827026).epsilon(1e-14));
    CHECK(v[2] == doctest::Approx(0.91775462568398114).epsilon(1e-14));
    CHECK(v[3] == doctest::Approx(0.39714789063478061).epsilon(1e-14));
    CHECK(v[4] == doctest::Approx(0.72896862742141152).epsilon(1e-14));
    CHECK(v[5] == doctest::Approx(-0.68454710592868867).epsilon(1e-14));
    // cross-check against direct evaluation, not just frozen literals
    for (int k = 0; k < 3; ++k) {
        double w = 2.0 * M_PI / std::pow(2.0, 2 - k);
        CHECK(v[2 * k] == doctest::Approx(std::sin(w * 0.37)).epsilon(1e-13));
        CHECK(v[2 * k + 1] == doctest::Approx(std::cos(w * 0.37)).epsilon(1e-13));
    }
}

TEST_CASE("sinusoidal_encode: bounded in [-1,1] and rejects non-finite") {
    Encoding enc{10, 0.1, 8.0};
    RngStream r(5, 5);
    for (int i = 0; i < 2000; ++i) {
        double x = r.uniform(-1000.0, 1000.0);
        Vec v = sinusoidal_encode(x, enc);
        CHECK(v.maxCoeff() <= 1.0);
        CHECK(v.minCoeff() >= -1.0);
    }
    CHECK_THROWS_AS(sinusoidal_encode(std::nan(""), enc), numeric_error);
}

TEST_CASE("std_normal_logpdf: analytic points") {
    Mat v0 = Mat::Zero(1, 1);
    CHECK(std_normal_logpdf<double>(v0) == doctest::Approx(-0.91893853320467274).epsilon(1e-15));
    Mat v1 = Mat::Zero(2, 1);
    CHECK(std_normal_logpdf<double>(v1) == doctest::Approx(-1.8378770664093455).epsilon(1e-15));
    Mat v2(2, 1);
    v2 << 1.0, -1.0;
    CHECK(std_normal_logpdf<double>(v2) == doctest::Approx(-1.8378770664093455 - 1.0).epsilon(1e-15));
}

TEST_CASE("grad_check: quadratic against analytic gradient") {
    auto f = [](const Vec& th) { return th.squaredNorm(); };
    Vec theta(2);
    theta << 1.0, 2.0;
    Vec grad(2);
    grad << 2.0, 4.0;
    auto res = grad_check<double>(f, theta, grad, 1e-4);
    CHECK(res.max_rel_error <= 1e-6);
}

TEST_CASE("grad_check: constant function hits the floor") {
    auto f = [](const Vec&) { return 3.5; };
    Vec theta = Vec::Zero(3);
    Vec grad = Vec::Zero(3);
    auto res = grad_check<double>(f, theta, grad, 1e-4);
    CHECK(res.max_rel_error == 0.0);
}

TEST_CASE("grad_check: flags non-finite values") {
    auto f = [](const Vec& th) { return th[0] > 0 ? std::numeric_limits<double>::quiet_NaN() : 0.0; };
    Vec theta = Vec::Zero(1);
    Vec grad = Vec::Zero(1);
    auto res = grad_check<double>(f, theta, grad, 1e-4);
    CHECK_FALSE(res.finite);
}

TEST_CASE("schedule_eval: table values and derivatives") {
    auto se = schedule_eval(ScheduleKind::cond_ot, 1.0);
    CHECK(se.alpha == 1.0);
    CHECK(se.beta == 0.0);
    CHECK(se.dalpha == 1.0);
    CHECK(se.dbeta == -1.0);

    auto c0 = schedule_eval(ScheduleKind::cosine, 0.0);
    CHECK(c0.alpha == doctest::Approx(0.0));
    CHECK(c0.beta == doctest::Approx(1.0));
    CHECK(c0.dalpha == doctest::Approx(M_PI / 2).epsilon(1e-15));
    CHECK(c0.dbeta == doctest::Approx(0.0));

    auto lv = schedule_eval(ScheduleKind::linear_vp, 0.6);
    CHECK(lv.alpha == doctest::Approx(0.6));
    CHECK(lv.beta == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(lv.dalpha == 1.0);
    CHECK(lv.dbeta == doctest::Approx(-0.75).epsilon(1e-15));

    CHECK_THROWS_AS(schedule_eval(ScheduleKind::cond_ot, 1.5), config_error);
    CHECK_THROWS_AS(schedule_eval(ScheduleKind::cond_ot, -0.1), config_error);
}

TEST_CASE("schedule_eval: endpoint identities and finite-difference derivatives") {
    for (auto k : {ScheduleKind::cond_ot, ScheduleKind::linear_vp, ScheduleKind::cosine,
                   ScheduleKind::poly2}) {
        auto s0 = schedule_eval(k, 0.0);
        auto s1 = schedule_eval(k, 1.0);
        CHECK(s0.alpha == doctest::Approx(0.0));
        CHECK(s1.beta == doctest::Approx(0.0));
        const double h = 1e-6;
        for (double t : {0.2, 0.5, 0.8}) {
            auto sm = schedule_eval(k, t - h);
            auto sp = schedule_eval(k, t + h);
            auto sc = schedule_eval(k, t);
            CHECK(sc.dalpha == doctest::Approx((sp.alpha - sm.alpha) / (2 * h)).epsilon(1e-6));
            CHECK(sc.dbeta == doctest::Approx((sp.beta - sm.beta) / (2 * h)).epsilon(1e-6));
        }
    }
}

TEST_CASE("to_velocity: identity for velocity objective") {
    Mat out = Mat::Random(3, 2);
    Mat y = Mat::Random(3, 2);
    Mat u = to_velocity(Objective::velocity, out, y, 0.3, ScheduleKind::cond_ot);
    CHECK((u - out).norm() == 0.0);
}

TEST_CASE("to_velocity: exact clean/noise predictions recover y1 - y0 under cond-ot") {
    RngStream r(11, 0);
    Mat y1(4, 1), y0(4, 1);
    for (int i = 0; i < 4; ++i) {
        y1(i, 0) = r.normal();
        y0(i, 0) = r.normal();
    }
    for (double t : {0.25, 0.5, 0.9}) {
        Mat yt = t * y1 + (1 - t) * y0;
        Mat uc = to_velocity(Objective::clean, y1, yt, t, ScheduleKind::cond_ot);
        CHECK((uc - (y1 - y0)).norm() < 1e-12);
        Mat un = to_velocity(Objective::noise, y0, yt, t, ScheduleKind::cond_ot);
        CHECK((un - (y1 - y0)).norm() < 1e-12);
    }
}

TEST_CASE("to_velocity: rejects singular schedule coefficients") {
    Mat out = Mat::Zero(1, 1), y = Mat::Zero(1, 1);
    CHECK_THROWS_AS(to_velocity(Objective::clean, out, y, 1.0, ScheduleKind::cond_ot),
                    numeric_error);
    CHECK_THROWS_AS(to_velocity(Objective::noise, out, y, 0.0, ScheduleKind::cond_ot),
                    numeric_error);
}

namespace {

// Scalar reference for a tiny tape graph, used to pin the op backward rules.
double tape_quadratic(const Vec& th) {
    Tape<double> tape;
    Mat w(1, 2);
    w << th[0], th[1];
    auto wv = tape.input(w);
    Mat x(3, 2);
    x << 1, 2, 3, 4, 5, 6;
    auto xv = tape.constant(x);
    auto y = tape.matmul_nt(xv, wv);  // 3x1
    Mat target(3, 1);
    target << 1, 0, -1;
    auto loss = tape.mean_sq_error(y, target);
    return tape.value(loss)(0, 0);
}

}  // namespace

TEST_CASE("tape: op gradients match central differences") {
    RngStream r(21, 1);
    // exercise every op in one composite graph, grad-check the inputs
    auto run = [&](const Vec& th, Vec* grad_out) {
        Tape<double> tape;
        Mat a(2, 4);
        for (int i = 0; i < 8; ++i) a(i / 4, i % 4) = th[i];
        Mat w(3, 4);
        for (int i = 0; i < 12; ++i) w(i / 4, i % 4) = th[8 + i];
        Mat b(1, 3);
        for (int i = 0; i < 3; ++i) b(0, i) = th[20 + i];
        auto av = tape.input(a);
        auto wv = tape.input(w);
        auto bv = tape.input(b);
        auto lin = tape.linear(av, wv, bv);           // 2x3
        auto g = tape.gelu(lin);                      // 2x3
        auto gain = tape.input(Mat::Ones(1, 3) * th[23]);
        auto bias = tape.input(Mat::Zero(1, 3));
        auto ln = tape.layernorm(g, gain, bias);      // 2x3
        auto sm = tape.softmax_rows(ln);              // 2x3
        auto prod = tape.matmul_nt(sm, tape.constant(Mat::Ones(2, 3) * 0.5), 2.0);  // 2x2
        auto cat = tape.hconcat({prod, sm});          // 2x5
        auto vc = tape.vconcat(cat, tape.scale(cat, -0.5));  // 4x5
        auto sl = tape.slice_cols(tape.slice_rows(vc, 1, 3), 1, 3);  // 3x3
        auto comb = tape.add_scaled(sl, tape.constant(Mat::Ones(3, 3)), 0.25);
        Mat tgt = Mat::Constant(3, 3, 0.3);
        auto loss = tape.mean_sq_error(comb, tgt);
        if (grad_out) {
            tape.backward(loss, Mat::Ones(1, 1));
            Vec g2(24);
            Mat ga = tape.grad(av), gw = tape.grad(wv), gb = tape.grad(bv);
            for (int i = 0; i < 8; ++i) g2[i] = ga(i / 4, i % 4);
            for (int i = 0; i < 12; ++i) g2[8 + i] = gw(i / 4, i % 4);
            for (int i = 0; i < 3; ++i) g2[20 + i] = gb(0, i);
            g2[23] = tape.grad(gain).sum();
            *grad_out = g2;
        }
        return tape.value(loss)(0, 0);
    };
    Vec theta(24);
    for (int i = 0; i < 24; ++i) theta[i] = 0.3 * r.normal() + 0.1;
    Vec grad;
    run(theta, &grad);
    auto res = grad_check<double>([&](const Vec& t) { return run(t, nullptr); }, theta, grad, 1e-5);
    CHECK(res.max_rel_error <= 2e-7);
}

TEST_CASE("tape: value of a simple product graph") {
    Vec th(2);
    th << 0.5, -1.0;
    // y = x * w^T; mse against target
    // rows of x: (1,2),(3,4),(5,6) -> y = (-1.5,-2.5,-3.5)
    double loss = tape_quadratic(th);
    double expect = (std::pow(-1.5 - 1, 2) + std::pow(-2.5, 2) + std::pow(-3.5 + 1, 2)) / 3.0;
    CHECK(loss == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("tape: repeated backward passes with zero_grad are consistent") {
    Tape<double> tape;
    auto x = tape.input(Mat::Ones(2, 2));
    auto y = tape.scale(x, 3.0);
    tape.backward(y, Mat::Ones(2, 2));
    Mat g1 = tape.grad(x);
    tape.zero_grad();
    tape.backward(y, Mat::Ones(2, 2));
    Mat g2 = tape.grad(x);
    CHECK((g1 - g2).norm() == 0.0);
    CHECK(g1(0, 0) == 3.0);
}

TEST_CASE("tape: constants receive no gradient work") {
    Tape<double> tape;
    auto c = tape.constant(Mat::Ones(2, 2));
    auto x = tape.input(Mat::Ones(2, 2));
    auto y = tape.matmul(c, x);
    tape.backward(y, Mat::Ones(2, 2));
    CHECK_FALSE(tape.needs_grad(c));
    CHECK(tape.grad(c).norm() == 0.0);
    CHECK(tape.grad(x).norm() > 0.0);
}

TEST_CASE("tape: masked softmax gives exactly zero weight to padded columns") {
    Tape<double> tape;
    Mat s(2, 4);
    s << 1.0, 2.0, 1e9, 1e9, -1.0, 0.5, 1e9, 1e9;
    auto sv = tape.input(s);
    auto p = tape.softmax_rows(sv, 2);
    Mat pv = tape.value(p);
    CHECK(pv(0, 2) == 0.0);
    CHECK(pv(0, 3) == 0.0);
    CHECK(pv.row(0).sum() == doctest::Approx(1.0).epsilon(1e-15));
    Mat s2 = s.leftCols(2);
    Tape<double> tape2;
    auto p2 = tape2.softmax_rows(tape2.input(s2));
    CHECK((pv.leftCols(2) - tape2.value(p2)).norm() == 0.0);
}
