#include <doctest.h>

#include <cmath>

#include "transnet/losses.hpp"
#include "transnet/morphology.hpp"
#include "transnet/rng.hpp"
#include "transnet/triplets.hpp"

using namespace transnet;
using ad::Value;

namespace {

Tensor random_tensor(const Shape& s, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Tensor t(s);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

Value scores_const(std::initializer_list<double> vals) {
    Tensor t(Shape(int(vals.size()), 1, 1, 1));
    std::copy(vals.begin(), vals.end(), t.data.begin());
    return ad::constant(t);
}

// Central-difference gradient of f with respect to flat coordinates of a
// leaf parameter vector.
double numeric_partial(const std::function<double()>& f, double& coord, double h) {
    double saved = coord;
    coord = saved + h;
    double up = f();
    coord = saved - h;
    double down = f();
    coord = saved;
    return (up - down) / (2.0 * h);
}

void grad_check_params(ParametricNet& net, const std::function<Value()>& loss_fn, Rng& rng,
                       int coords_per_param, double tol) {
    Value loss = loss_fn();
    ad::GradMap g = ad::backward(loss);
    for (const Value& p : net.params()) {
        Value gp = g.at(p);
        for (int c = 0; c < coords_per_param; ++c) {
            size_t idx = size_t(rng.uniform_int(0, int(p->value.data.size()) - 1));
            double got = gp->value.data[idx];
            // A leaky-relu kink inside the step interval makes a single h
            // unreliable; the derivative is correct if the FD quotient
            // converges to it for some small h.
            double best = 1e300;
            for (double h : {1e-5, 1e-6, 1e-7}) {
                double want = numeric_partial([&] { return loss_fn()->value.item(); },
                                              p->value.data[idx], h);
                double denom = std::max({std::abs(want), std::abs(got), 1e-6});
                best = std::min(best, std::abs(got - want) / denom);
            }
            CHECK(best < tol);
        }
    }
}

}  // namespace

TEST_CASE("reconstruction loss arithmetic") {
    Rng rng(1);
    Tensor m = random_tensor(Shape(1, 1, 2, 2), rng);
    CHECK(reconstruction_loss(ad::constant(m), ad::constant(m))->value.item() == 0.0);

    Tensor gt(Shape(1, 1, 2, 2));
    Tensor pred = gt;
    pred.at(0, 0, 0, 1) = 1.0;  // one of four pixels differs by 1
    CHECK(reconstruction_loss(ad::constant(pred), ad::constant(gt))->value.item() ==
          doctest::Approx(0.25));

    Tensor hard(Shape(1, 1, 2, 2));
    hard.at(0, 0, 0, 0) = 1.0;
    hard.at(0, 0, 1, 1) = 1.0;
    Tensor comp = hard;
    for (double& v : comp.data) v = 1.0 - v;
    CHECK(reconstruction_loss(ad::constant(comp), ad::constant(hard))->value.item() ==
          doctest::Approx(1.0));

    CHECK_THROWS_AS(
        reconstruction_loss(ad::constant(Tensor(Shape(1, 1, 2, 2))),
                            ad::constant(Tensor(Shape(1, 1, 3, 3)))),
        std::invalid_argument);
}

TEST_CASE("gradient penalty analytic cases") {
    Rng rng(5);
    const double lambda = 10.0;
    Tensor interp = random_tensor(Shape(3, 7, 8, 8), rng);

    // Linear functional with unit-L2-norm coefficients: ||grad|| = 1 exactly.
    Tensor w = random_tensor(Shape(1, 7, 8, 8), rng, -1.0, 1.0);
    double norm = 0.0;
    for (double v : w.data) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : w.data) v /= norm;
    // per-sample dot product with w broadcast over the batch
    auto linear_fn = [&](const Value& x) {
        Tensor wb(x->shape());
        const std::int64_t stride = std::int64_t(w.size());
        for (int n = 0; n < x->shape().n; ++n)
            std::copy(w.data.begin(), w.data.end(), wb.data.begin() + n * stride);
        return ad::sum_chw(ad::mul(x, ad::constant(wb)));
    };
    CHECK(gradient_penalty(linear_fn, interp, lambda)->value.item() < 1e-6);

    // Constant critic: zero gradient, penalty = lambda exactly.
    Rng crng(9);
    BoundaryCritic critic(7, 4, 2, crng);
    std::vector<double> zeros(size_t(critic.param_count()), 0.0);
    critic.set_flat_params(zeros);
    CHECK(gradient_penalty(critic, interp, lambda)->value.item() ==
          doctest::Approx(lambda).epsilon(1e-6));

    // lambda = 0 shorts out regardless of critic.
    BoundaryCritic fresh(7, 4, 2, crng);
    CHECK(gradient_penalty(fresh, interp, 0.0)->value.item() == 0.0);
    // nonnegativity on a live critic
    CHECK(gradient_penalty(fresh, interp, lambda)->value.item() >= 0.0);
}

TEST_CASE("critic loss arithmetic and shift invariance") {
    Value gp0 = ad::constant(Tensor::scalar(0.0));
    Value loss = critic_loss(scores_const({1, 1}), scores_const({1, 1}), scores_const({2, 2}),
                             gp0);
    CHECK(loss->value.item() == doctest::Approx(-1.0));

    CHECK(critic_loss(scores_const({0.7}), scores_const({0.7}), scores_const({0.7}), gp0)
              ->value.item() == doctest::Approx(0.0));

    CHECK(critic_loss(scores_const({0, 0}), scores_const({0, 0}), scores_const({0, 0}),
                      ad::constant(Tensor::scalar(10.0)))
              ->value.item() == doctest::Approx(10.0));

    // score-shift invariance: +c to every score cancels
    double base = critic_loss(scores_const({0.3, -0.2}), scores_const({1.1, 0.4}),
                              scores_const({0.9, 2.0}), gp0)
                      ->value.item();
    double shifted = critic_loss(scores_const({1.3, 0.8}), scores_const({2.1, 1.4}),
                                 scores_const({1.9, 3.0}), gp0)
                         ->value.item();
    CHECK(shifted == doctest::Approx(base).epsilon(1e-12));

    // without pseudo scores the fake weight becomes 1
    double np = critic_loss(scores_const({1, 1}), nullptr, scores_const({2, 2}), gp0)
                    ->value.item();
    CHECK(np == doctest::Approx(-1.0));

    CHECK_THROWS_AS(critic_loss(scores_const({1}), nullptr, scores_const({1, 2}), gp0),
                    std::invalid_argument);
    CHECK_THROWS_AS(critic_loss(nullptr, nullptr, scores_const({1}), gp0),
                    std::invalid_argument);
}

TEST_CASE("generator loss arithmetic and dropped terms") {
    auto c = [](double v) { return ad::constant(Tensor::scalar(v)); };
    CHECK(generator_loss(c(0.2), c(0.1), c(0.5), c(0.3), 1.0, 1.0)->value.item() ==
          doctest::Approx(-0.5));
    CHECK(generator_loss(c(0.7), c(0.9), c(0.0), c(0.0), 0.0, 0.0)->value.item() ==
          doctest::Approx(0.0));
    // dropped outer score (its critic is ablated)
    CHECK(generator_loss(c(0.2), c(0.1), nullptr, c(0.3), 1.0, 1.0)->value.item() ==
          doctest::Approx(0.0));
    CHECK(generator_loss(nullptr, nullptr, nullptr, nullptr, 1.0, 1.0)->value.item() == 0.0);
}

TEST_CASE("self-supervision: identity transform and empty predictions give zero") {
    Rng rng(31);
    SegmentationNetwork net(3, 4, 2, rng);
    Tensor x = random_tensor(Shape(2, 3, 16, 16), rng);
    std::vector<AffineTransform> ids = {AffineTransform::identity(),
                                        AffineTransform::identity()};
    std::vector<int> radii = {2, 3};
    Value loss = self_supervised_loss(net, ad::constant(x), ids, radii);
    CHECK(loss->value.item() < 1e-12);

    // A network pinned to output ~0 has no boundary: both branches vanish.
    std::vector<double> flat(size_t(net.param_count()), 0.0);
    flat[flat.size() - 1] = -50.0;  // head bias drives the sigmoid to ~0
    net.set_flat_params(flat);
    std::vector<AffineTransform> warps = {make_affine(15, 1.1, 0.05, 0.0, false),
                                          make_affine(-10, 0.9, 0.0, 0.05, true)};
    CHECK(self_supervised_loss(net, ad::constant(x), warps, radii)->value.item() < 1e-12);
}

TEST_CASE("exactly equivariant predictions score near zero") {
    // Pixel-exact transforms (integer translation, horizontal flip) applied
    // to a prediction with a clear centered blob: the warped prediction IS
    // the warped plain prediction, so only resampling remains.
    const int S = 32;
    Tensor m(Shape(2, 1, S, S));
    for (int n = 0; n < 2; ++n)
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x) {
                double dy = (y - 15.5) / 6.0, dx = (x - (n == 0 ? 15.5 : 13.5)) / 5.0;
                m.at(n, 0, y, x) = 1.0 / (1.0 + std::exp(8.0 * (dy * dy + dx * dx - 1.0)));
            }
    AffineTransform shift = AffineTransform::identity();
    shift.m[5] = -2.0 * 2.0 / S;  // two pixels right
    AffineTransform flip = make_affine(0, 1.0, 0.0, 0.0, true);
    std::vector<AffineTransform> ts = {shift, flip};
    std::vector<int> radii = {3, 3};

    std::vector<std::array<double, 6>> mats = {shift.m, flip.m};
    Value plain = ad::constant(m);
    Value warped = ad::warp_affine(plain, mats);
    CHECK(self_supervised_core(plain, warped, ts, radii)->value.item() < 1e-3);
}

TEST_CASE("loss gradients match finite differences on tiny networks") {
    Rng rng(1234);
    const int S = 8;

    SUBCASE("reconstruction through the segmentation network") {
        SegmentationNetwork net(3, 2, 2, rng);
        Tensor x = random_tensor(Shape(2, 3, S, S), rng);
        Tensor gt(Shape(2, 1, S, S));
        for (double& v : gt.data) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
        grad_check_params(
            net,
            [&] { return reconstruction_loss(net.forward(ad::constant(x)), ad::constant(gt)); },
            rng, 4, 1e-4);
    }

    SUBCASE("self-supervision through the segmentation network") {
        SegmentationNetwork net(3, 2, 2, rng);
        Tensor x = random_tensor(Shape(1, 3, S, S), rng);
        std::vector<AffineTransform> ts = {make_affine(20, 1.1, 0.05, -0.05, false)};
        std::vector<int> radii = {2};
        // The boundary bands binarize predictions at 0.5, so a prediction
        // sitting at the threshold would flip band membership under the
        // finite-difference step. Shift the head bias until every
        // prediction keeps a decisive margin.
        auto margin = [&] {
            ad::NoGradGuard ng;
            double mn = 1e9;
            std::vector<std::array<double, 6>> mats = {ts[0].m};
            for (const Value& m : {net.forward(ad::constant(x)),
                                   net.forward(ad::warp_affine(ad::constant(x), mats))})
                for (double v : m->value.data) mn = std::min(mn, std::abs(v - 0.5));
            return mn;
        };
        while (margin() < 1e-4)
            for (double& b : net.params().back()->value.data) b += 0.013;
        grad_check_params(
            net, [&] { return self_supervised_loss(net, ad::constant(x), ts, radii); }, rng, 4,
            2e-4);
    }

    SUBCASE("critic loss with gradient penalty through critic parameters") {
        BoundaryCritic critic(7, 2, 2, rng);
        Tensor fake = random_tensor(Shape(2, 7, S, S), rng);
        Tensor pseudo = random_tensor(Shape(2, 7, S, S), rng);
        Tensor real = random_tensor(Shape(2, 7, S, S), rng);
        Tensor interp = random_tensor(Shape(2, 7, S, S), rng);
        auto loss_fn = [&] {
            Value gp = gradient_penalty(critic, interp, 10.0);
            return critic_loss(critic.forward(ad::constant(fake)),
                               critic.forward(ad::constant(pseudo)),
                               critic.forward(ad::constant(real)), gp);
        };
        grad_check_params(critic, loss_fn, rng, 4, 2e-4);
    }

    SUBCASE("generator objective through the segmentation network") {
        SegmentationNetwork net(3, 2, 2, rng);
        Rng crng(55);
        BoundaryCritic outer(7, 2, 2, crng), inner(7, 2, 2, crng);
        Tensor x = random_tensor(Shape(1, 3, S, S), rng);
        Tensor gt(Shape(1, 1, S, S));
        for (double& v : gt.data) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
        std::vector<AffineTransform> ts = {make_affine(-15, 0.9, 0.0, 0.05, true)};
        std::vector<int> radii = {2};
        // Keep predictions away from the band-binarization threshold (see
        // the self-supervision subcase).
        auto margin = [&] {
            ad::NoGradGuard ng;
            double mn = 1e9;
            std::vector<std::array<double, 6>> mats = {ts[0].m};
            for (const Value& m : {net.forward(ad::constant(x)),
                                   net.forward(ad::warp_affine(ad::constant(x), mats))})
                for (double v : m->value.data) mn = std::min(mn, std::abs(v - 0.5));
            return mn;
        };
        while (margin() < 1e-4)
            for (double& b : net.params().back()->value.data) b += 0.013;
        auto loss_fn = [&] {
            Value xc = ad::constant(x);
            Value m = net.forward(xc);
            Value rec = reconstruction_loss(m, ad::constant(gt));
            Value sel = self_supervised_loss(net, xc, ts, radii);
            Value t_out = triplet_concat(xc, m);
            Value ones = ad::constant(Tensor::full(m->shape(), 1.0));
            Value t_in = triplet_concat(xc, ad::sub(ones, m));
            Value so = ad::mean_all(outer.forward(t_out));
            Value si = ad::mean_all(inner.forward(t_in));
            return generator_loss(rec, sel, so, si, 1.0, 1.0);
        };
        grad_check_params(net, loss_fn, rng, 3, 2e-4);
    }
}
