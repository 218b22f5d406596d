#include <doctest.h>

#include <cmath>
#include <functional>

#include "transnet/autodiff.hpp"
#include "transnet/rng.hpp"

using namespace transnet;
using namespace transnet::ad;

namespace {

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(s);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Central finite differences of a scalar-valued function of one tensor leaf.
Tensor numeric_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                    double eps = 1e-6) {
    Tensor g(x.shape);
    Tensor xp = x;
    for (size_t i = 0; i < x.data.size(); ++i) {
        xp.data[i] = x.data[i] + eps;
        double fp = f(xp);
        xp.data[i] = x.data[i] - eps;
        double fm = f(xp);
        xp.data[i] = x.data[i];
        g.data[i] = (fp - fm) / (2 * eps);
    }
    return g;
}

void check_close(const Tensor& a, const Tensor& b, double tol) {
    REQUIRE(a.shape == b.shape);
    for (size_t i = 0; i < a.data.size(); ++i) {
        double denom = std::max({std::fabs(a.data[i]), std::fabs(b.data[i]), 1.0});
        CHECK(std::fabs(a.data[i] - b.data[i]) / denom < tol);
    }
}

// Checks the analytic gradient of build() w.r.t. a single leaf.
void grad_check(Shape leaf_shape, const std::function<Value(const Value&)>& build,
                Rng& rng, double tol = 1e-6) {
    Tensor x0 = random_tensor(leaf_shape, rng);
    Value x = leaf(x0, true);
    Value y = build(x);
    GradMap gm = backward(y);
    Tensor analytic = gm.at(x)->value;
    Tensor numeric = numeric_grad(
        [&](const Tensor& t) { return build(constant(t))->value.item(); }, x0);
    check_close(analytic, numeric, tol);
}

}  // namespace

TEST_CASE("elementwise op gradients match finite differences") {
    Rng rng(1);
    grad_check(Shape(2, 3, 4, 4), [](const Value& x) {
        return sum_all(mul(x, add_const(scale(x, 0.5), 1.0)));
    }, rng);
    grad_check(Shape(1, 2, 3, 3), [](const Value& x) {
        return mean_all(sigmoid(x));
    }, rng);
    grad_check(Shape(1, 2, 5, 5), [](const Value& x) {
        return sum_all(leaky_relu(x, 0.2));
    }, rng, 1e-4);
    grad_check(Shape(2, 1, 3, 3), [](const Value& x) {
        return sum_all(pow_const(add_const(square(x), 1.0), 0.5));
    }, rng);
}

TEST_CASE("broadcast / reduction / channel op gradients") {
    Rng rng(2);
    grad_check(Shape(2, 1, 4, 4), [&rng](const Value& m) {
        static Tensor img;
        if (img.data.empty()) {
            Rng r2(7);
            img = random_tensor(Shape(2, 3, 4, 4), r2);
        }
        return sum_all(square(mul_bcast(constant(img), m)));
    }, rng);
    grad_check(Shape(2, 3, 4, 4), [](const Value& x) {
        return sum_all(square(sum_channels(x)));
    }, rng);
    grad_check(Shape(2, 3, 2, 2), [](const Value& x) {
        return sum_all(square(concat_channels({x, scale(x, 2.0)})));
    }, rng);
    grad_check(Shape(1, 4, 2, 2), [](const Value& x) {
        return sum_all(square(slice_channels(x, 1, 3)));
    }, rng);
    grad_check(Shape(3, 2, 2, 2), [](const Value& x) {
        return sum_all(square(sum_chw(x)));
    }, rng);
    grad_check(Shape(2, 3, 2, 2), [](const Value& x) {
        return sum_all(square(sum_hw(x)));
    }, rng);
    grad_check(Shape(2, 3, 2, 2), [](const Value& x) {
        return sum_all(square(sum_nhw(x)));
    }, rng);
}

TEST_CASE("conv2d gradients w.r.t. input, weight and bias") {
    Rng rng(3);
    Tensor w0 = random_tensor(Shape(4, 3, 3, 3), rng, -0.5, 0.5);
    Tensor b0 = random_tensor(Shape(1, 4, 1, 1), rng, -0.5, 0.5);
    Tensor x0 = random_tensor(Shape(2, 3, 6, 6), rng);

    for (int stride : {1, 2}) {
        // w.r.t. input
        grad_check(Shape(2, 3, 6, 6), [&](const Value& x) {
            return sum_all(square(conv2d(x, constant(w0), constant(b0), stride, 1)));
        }, rng, 1e-5);
        // w.r.t. weight
        grad_check(Shape(4, 3, 3, 3), [&](const Value& w) {
            return sum_all(square(conv2d(constant(x0), w, constant(b0), stride, 1)));
        }, rng, 1e-5);
        // w.r.t. bias
        grad_check(Shape(1, 4, 1, 1), [&](const Value& b) {
            return sum_all(square(conv2d(constant(x0), constant(w0), b, stride, 1)));
        }, rng, 1e-5);
    }
}

TEST_CASE("1x1 conv on flat features acts as a linear layer") {
    Rng rng(4);
    Tensor x0 = random_tensor(Shape(3, 5, 1, 1), rng);
    Tensor w0 = random_tensor(Shape(2, 5, 1, 1), rng);
    Value y = conv_fwd(constant(x0), constant(w0), 1, 0);
    REQUIRE(y->shape() == Shape(3, 2, 1, 1));
    for (int n = 0; n < 3; ++n)
        for (int k = 0; k < 2; ++k) {
            double expect = 0;
            for (int f = 0; f < 5; ++f) expect += x0.at(n, f, 0, 0) * w0.at(k, f, 0, 0);
            CHECK(y->value.at(n, k, 0, 0) == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("resampling op gradients") {
    Rng rng(5);
    grad_check(Shape(2, 2, 3, 3), [](const Value& x) {
        return sum_all(square(upsample2_nearest(x)));
    }, rng);
    grad_check(Shape(2, 2, 4, 4), [](const Value& x) {
        return sum_all(square(downsample2_sum(x)));
    }, rng);
    std::vector<std::array<double, 6>> mats = {
        {0.9, 0.1, 0.05, -0.12, 1.1, -0.03},
        {1.0, 0.0, 0.3, 0.0, -1.0, 0.0}};
    grad_check(Shape(2, 2, 8, 8), [&](const Value& x) {
        return sum_all(square(warp_affine(x, mats)));
    }, rng, 1e-5);
}

TEST_CASE("second-order: gradient-of-gradient through conv matches finite differences") {
    // f(w) = sum over input-gradient squared of a conv net's scalar output;
    // this is exactly the structure the gradient penalty differentiates.
    Rng rng(6);
    Tensor x0 = random_tensor(Shape(1, 2, 6, 6), rng);
    Tensor w0 = random_tensor(Shape(3, 2, 3, 3), rng, -0.5, 0.5);
    Tensor w1 = random_tensor(Shape(1, 3, 1, 1), rng, -0.5, 0.5);

    auto f = [&](const Tensor& wt) -> double {
        Value w = leaf(wt, true);
        Value x = leaf(x0, true);
        Value h = leaky_relu(conv_fwd(x, w, 1, 1), 0.2);
        Value score = sum_all(conv_fwd(sum_hw(h), constant(w1), 1, 0));
        GradMap gm = backward(score, /*create_graph=*/true);
        Value gx = gm.at(x);
        return sum_all(square(gx))->value.item();
    };
    auto analytic = [&](const Tensor& wt) -> Tensor {
        Value w = leaf(wt, true);
        Value x = leaf(x0, true);
        Value h = leaky_relu(conv_fwd(x, w, 1, 1), 0.2);
        Value score = sum_all(conv_fwd(sum_hw(h), constant(w1), 1, 0));
        GradMap gm = backward(score, /*create_graph=*/true);
        Value obj = sum_all(square(gm.at(x)));
        GradMap gm2 = backward(obj);
        return gm2.at(w)->value;
    };

    Tensor ga = analytic(w0);
    Tensor gn = numeric_grad(f, w0, 1e-5);
    check_close(ga, gn, 1e-5);
}

TEST_CASE("NoGradGuard suppresses graph recording") {
    Tensor t = Tensor::full(Shape(1, 1, 2, 2), 0.5);
    Value x = leaf(t, true);
    Value y;
    {
        NoGradGuard ng;
        y = sum_all(square(x));
    }
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
    CHECK(y->value.item() == doctest::Approx(1.0));
}

TEST_CASE("backward accumulates over reused subexpressions") {
    Value x = leaf(Tensor::scalar(3.0), true);
    Value y = add(mul(x, x), scale(x, 2.0));  // x^2 + 2x, dy/dx = 2x+2 = 8
    GradMap gm = backward(y);
    CHECK(gm.at(x)->value.item() == doctest::Approx(8.0));
}
