#include <doctest.h>

#include "transnet/morphology.hpp"
#include "transnet/rng.hpp"
#include "transnet/triplets.hpp"

using namespace transnet;

namespace {

Image random_image(int h, int w, Rng& rng) {
    Tensor t(Shape(1, 3, h, w));
    for (double& v : t.data) v = rng.uniform();
    return Image(std::move(t));
}

Mask random_hard(int h, int w, Rng& rng) {
    Tensor t(Shape(1, 1, h, w));
    for (double& v : t.data) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    return Mask(std::move(t), Hardness::Hard);
}

Mask random_soft(int h, int w, Rng& rng) {
    Tensor t(Shape(1, 1, h, w));
    for (double& v : t.data) v = rng.uniform();
    return Mask(std::move(t), Hardness::Soft);
}

void check_product_invariant(const Triplet& t) {
    const int hw = t.image.height() * t.image.width();
    for (int c = 0; c < t.image.channels(); ++c)
        for (int i = 0; i < hw; ++i) {
            double want = t.image.data.data[size_t(c * hw + i)] * t.mask.data.data[size_t(i)];
            CHECK(t.masked_image.data.data[size_t(c * hw + i)] ==
                  doctest::Approx(want).epsilon(1e-12));
        }
}

}  // namespace

TEST_CASE("fake/real triplets satisfy the product invariant") {
    Rng rng(42);
    Image x = random_image(12, 12, rng);
    Mask soft = random_soft(12, 12, rng);
    Mask gt = random_hard(12, 12, rng);

    Triplet f = fake_outer(x, soft);
    CHECK(f.side == TripletSide::Outer);
    CHECK(f.kind == TripletKind::Fake);
    check_product_invariant(f);

    Triplet r = real_outer(x, gt);
    CHECK(r.kind == TripletKind::Real);
    check_product_invariant(r);
    CHECK_THROWS_AS(real_outer(x, soft), std::invalid_argument);

    // all-ones / all-zeros extremes
    Mask ones(Tensor::full(Shape(1, 1, 12, 12), 1.0), Hardness::Soft);
    Mask zeros(Tensor::full(Shape(1, 1, 12, 12), 0.0), Hardness::Soft);
    CHECK(fake_outer(x, ones).masked_image.data.data == x.data.data);
    CHECK(fake_outer(x, zeros).masked_image.data.sum() == 0.0);
    // fake_inner flips the mask: all-zeros prediction masks nothing out.
    Triplet fi = fake_inner(x, zeros);
    CHECK(fi.mask.data.sum() == 144.0);
    CHECK(fi.masked_image.data.data == x.data.data);
}

TEST_CASE("inner and outer real triplets partition the image") {
    Rng rng(7);
    Image x = random_image(10, 10, rng);
    Mask gt = random_hard(10, 10, rng);
    Triplet o = real_outer(x, gt), i = real_inner(x, gt);
    check_product_invariant(o);
    check_product_invariant(i);
    for (size_t k = 0; k < x.data.data.size(); ++k)
        CHECK(o.masked_image.data.data[k] + i.masked_image.data.data[k] ==
              doctest::Approx(x.data.data[k]).epsilon(1e-15));
}

TEST_CASE("pseudo triplets use morphology and stay supersets") {
    Rng rng(11);
    Image x = random_image(16, 16, rng);
    Mask gt = random_hard(16, 16, rng);

    for (int r : {1, 2, 3}) {
        Triplet po = pseudo_outer(x, gt, r);
        CHECK(po.kind == TripletKind::Pseudo);
        check_product_invariant(po);
        CHECK(po.mask.data.data == dilate(gt, r).data.data);
        // pseudo outer mask contains the real mask
        for (size_t k = 0; k < gt.data.data.size(); ++k)
            CHECK(po.mask.data.data[k] >= gt.data.data[k]);

        Triplet pi = pseudo_inner(x, gt, r);
        check_product_invariant(pi);
        CHECK(pi.mask.data.data == dilate(complement(gt), r).data.data);
        // matches complement(erode(gt, r)) away from the border band, where
        // erosion against the grid edge plays no role
        {
            Mask ce = complement(erode(gt, r));
            for (int y = r; y < 16 - r; ++y)
                for (int xx = r; xx < 16 - r; ++xx)
                    CHECK(pi.mask.data.at(0, 0, y, xx) == ce.data.at(0, 0, y, xx));
        }
        for (size_t k = 0; k < gt.data.data.size(); ++k)
            CHECK(pi.mask.data.data[k] >= 1.0 - gt.data.data[k]);

        Triplet pe = pseudo_inner(x, gt, r, PseudoInnerVariant::ErodeComplement);
        CHECK(pe.mask.data.data == erode(complement(gt), r).data.data);
    }

    // dilation of empty is empty
    Mask empty(Tensor::full(Shape(1, 1, 16, 16), 0.0), Hardness::Hard);
    CHECK(pseudo_outer(x, empty, 2).mask.data.sum() == 0.0);
    // saturating radius gives the whole frame
    Tensor center(Shape(1, 1, 16, 16));
    for (int y = 4; y < 12; ++y)
        for (int xx = 4; xx < 12; ++xx) center.at(0, 0, y, xx) = 1.0;
    Triplet sat = pseudo_outer(x, Mask(center, Hardness::Hard), 7);
    CHECK(sat.mask.data.sum() == 256.0);
    CHECK(sat.masked_image.data.data == x.data.data);
}

TEST_CASE("interpolation endpoints, midpoint, convex hull") {
    Rng rng(5);
    Image xr = random_image(8, 8, rng), xf = random_image(8, 8, rng);
    Mask mr = random_hard(8, 8, rng);
    Mask mf = random_soft(8, 8, rng);
    Triplet real = real_outer(xr, mr);
    Triplet fake = fake_outer(xf, mf);

    Triplet at1 = interpolate(real, fake, 1.0);
    Triplet at0 = interpolate(real, fake, 0.0);
    CHECK(at1.image.data.data == real.image.data.data);
    CHECK(at1.mask.data.data == real.mask.data.data);
    CHECK(at1.masked_image.data.data == real.masked_image.data.data);
    CHECK(at0.image.data.data == fake.image.data.data);
    CHECK(at0.kind == TripletKind::Interpolated);

    Triplet mid = interpolate(real, fake, 0.5);
    for (size_t k = 0; k < mid.image.data.data.size(); ++k)
        CHECK(mid.image.data.data[k] ==
              doctest::Approx(0.5 * (real.image.data.data[k] + fake.image.data.data[k])));

    Triplet t = interpolate(real, fake, 0.3);
    auto in_hull = [](double v, double a, double b) {
        return v >= std::min(a, b) - 1e-12 && v <= std::max(a, b) + 1e-12;
    };
    for (size_t k = 0; k < t.mask.data.data.size(); ++k)
        CHECK(in_hull(t.mask.data.data[k], real.mask.data.data[k], fake.mask.data.data[k]));

    CHECK_THROWS_AS(interpolate(real, fake_inner(xf, mf), 0.5), std::invalid_argument);
    CHECK_THROWS_AS(interpolate(real, fake, 1.5), std::invalid_argument);
}

TEST_CASE("triplet tensors concatenate channels in [image, mask, product] order") {
    Rng rng(21);
    Image x = random_image(6, 6, rng);
    Mask m = random_soft(6, 6, rng);
    Triplet t = fake_outer(x, m);
    Tensor cat = triplet_tensor(t);
    CHECK(cat.shape == Shape(1, 7, 6, 6));
    const int hw = 36;
    for (int i = 0; i < 3 * hw; ++i) CHECK(cat.data[size_t(i)] == x.data.data[size_t(i)]);
    for (int i = 0; i < hw; ++i) CHECK(cat.data[size_t(3 * hw + i)] == m.data.data[size_t(i)]);
    for (int i = 0; i < 3 * hw; ++i)
        CHECK(cat.data[size_t(4 * hw + i)] ==
              doctest::Approx(t.masked_image.data.data[size_t(i)]).epsilon(1e-12));

    // the live-gradient path: mask values reach the product channels
    ad::Value imgs = ad::constant(x.data);
    ad::Value masks = ad::leaf(m.data, true);
    ad::Value joint = triplet_concat(imgs, masks);
    CHECK(joint->shape() == Shape(1, 7, 6, 6));
    CHECK(joint->requires_grad);
    ad::GradMap g = ad::backward(ad::sum_all(joint));
    // d(sum)/d(mask_px) = 1 + sum_c image_c(px)
    ad::Value gm = g.at(masks);
    for (int i = 0; i < hw; ++i) {
        double want = 1.0;
        for (int c = 0; c < 3; ++c) want += x.data.data[size_t(c * hw + i)];
        CHECK(gm->value.data[size_t(i)] == doctest::Approx(want).epsilon(1e-12));
    }
}
