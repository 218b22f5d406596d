#include <doctest.h>

#include "transnet/morphology.hpp"
#include "transnet/rng.hpp"

using namespace transnet;

namespace {

Mask hard_mask(int h, int w, std::initializer_list<int> vals) {
    Tensor t(Shape(1, 1, h, w));
    auto it = vals.begin();
    for (double& v : t.data) v = double(*it++);
    return Mask(std::move(t), Hardness::Hard);
}

Mask random_mask(int h, int w, Rng& rng, double p = 0.5) {
    Tensor t(Shape(1, 1, h, w));
    for (double& v : t.data) v = rng.bernoulli(p) ? 1.0 : 0.0;
    return Mask(std::move(t), Hardness::Hard);
}

// Independent per-pixel structuring-element sweep.
Mask oracle_dilate(const Mask& m, int r) {
    int h = m.height(), w = m.width();
    Tensor out(Shape(1, 1, h, w));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = 0.0;
            for (int dy = -r; dy <= r && v == 0.0; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    if (dy * dy + dx * dx > r * r) continue;
                    int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    if (m.data.at(0, 0, yy, xx) == 1.0) {
                        v = 1.0;
                        break;
                    }
                }
            out.at(0, 0, y, x) = v;
        }
    return Mask(std::move(out), Hardness::Hard);
}

Mask oracle_erode(const Mask& m, int r) {
    int h = m.height(), w = m.width();
    Tensor out(Shape(1, 1, h, w));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = 1.0;
            for (int dy = -r; dy <= r && v == 1.0; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    if (dy * dy + dx * dx > r * r) continue;
                    int yy = y + dy, xx = x + dx;
                    // Out-of-grid counts as background, so erosion fails.
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w ||
                        m.data.at(0, 0, yy, xx) == 0.0) {
                        v = 0.0;
                        break;
                    }
                }
            out.at(0, 0, y, x) = v;
        }
    return Mask(std::move(out), Hardness::Hard);
}

bool equal(const Mask& a, const Mask& b) {
    return a.data.data == b.data.data;
}

}  // namespace

TEST_CASE("disk strel membership") {
    DiskStrel s1 = DiskStrel::make(1);
    CHECK(s1.offsets.size() == 5);  // center + 4-neighborhood
    DiskStrel s2 = DiskStrel::make(2);
    CHECK(s2.offsets.size() == 13);
    bool has_center = false, has_21 = false;
    for (auto [dy, dx] : s2.offsets) {
        if (dy == 0 && dx == 0) has_center = true;
        if (dy == 2 && dx == 1) has_21 = true;  // 4+1 > 4, excluded
        // symmetry under negation
        bool found = false;
        for (auto [ey, ex] : s2.offsets) found |= (ey == -dy && ex == -dx);
        CHECK(found);
    }
    CHECK(has_center);
    CHECK_FALSE(has_21);
}

TEST_CASE("single pixel dilates to a cross at r=1") {
    Tensor t(Shape(1, 1, 9, 9));
    t.at(0, 0, 4, 4) = 1.0;
    Mask m(std::move(t), Hardness::Hard);
    Mask d = dilate(m, 1);
    CHECK(d.data.sum() == 5.0);
    CHECK(d.data.at(0, 0, 4, 4) == 1.0);
    CHECK(d.data.at(0, 0, 3, 4) == 1.0);
    CHECK(d.data.at(0, 0, 5, 4) == 1.0);
    CHECK(d.data.at(0, 0, 4, 3) == 1.0);
    CHECK(d.data.at(0, 0, 4, 5) == 1.0);
    CHECK(d.data.at(0, 0, 3, 3) == 0.0);

    // A lone pixel has no fully-foreground neighborhood.
    CHECK(erode(m, 1).data.sum() == 0.0);
}

TEST_CASE("saturating and empty masks are fixed points") {
    Mask full(Tensor::full(Shape(1, 1, 9, 9), 1.0), Hardness::Hard);
    Mask empty(Tensor::full(Shape(1, 1, 9, 9), 0.0), Hardness::Hard);
    CHECK(dilate(full, 3).data.sum() == 81.0);
    CHECK(dilate(empty, 3).data.sum() == 0.0);
    CHECK(erode(empty, 2).data.sum() == 0.0);

    // Full mask erodes only at the border (out-of-grid is background).
    Mask e = erode(full, 1);
    CHECK(e.data.sum() == 49.0);
    CHECK(e.data.at(0, 0, 0, 0) == 0.0);
    CHECK(e.data.at(0, 0, 1, 1) == 1.0);

    // weight_map of the full mask is that border frame.
    Mask w = weight_map(full, 1);
    CHECK(w.data.sum() == 81.0 - 49.0);
    CHECK(w.data.at(0, 0, 0, 4) == 1.0);
    CHECK(w.data.at(0, 0, 4, 4) == 0.0);

    CHECK(weight_map(empty, 2).data.sum() == 0.0);
}

TEST_CASE("weight map of centered 3x3 square, r=1") {
    Tensor t(Shape(1, 1, 9, 9));
    for (int y = 3; y <= 5; ++y)
        for (int x = 3; x <= 5; ++x) t.at(0, 0, y, x) = 1.0;
    Mask m(std::move(t), Hardness::Hard);
    Mask d = dilate(m, 1), e = erode(m, 1), w = weight_map(m, 1);
    CHECK(equal(d, oracle_dilate(m, 1)));
    CHECK(equal(e, oracle_erode(m, 1)));
    // Erosion keeps only the center pixel; the band is dilation minus it.
    CHECK(e.data.sum() == 1.0);
    CHECK(e.data.at(0, 0, 4, 4) == 1.0);
    CHECK(w.data.sum() == d.data.sum() - 1.0);
    CHECK(w.data.at(0, 0, 4, 4) == 0.0);
    CHECK(w.data.at(0, 0, 3, 3) == 1.0);
    CHECK(w.data.at(0, 0, 2, 4) == 1.0);
}

TEST_CASE("oracle equivalence, duality, monotonicity, extensivity on random masks") {
    Rng rng(123);
    for (int trial = 0; trial < 60; ++trial) {
        Mask m = random_mask(32, 32, rng, rng.uniform(0.2, 0.8));
        for (int r : {1, 2, 3, 5}) {
            Mask d = dilate(m, r), e = erode(m, r);
            CHECK(equal(d, oracle_dilate(m, r)));
            CHECK(equal(e, oracle_erode(m, r)));

            // Duality erode = !dilate(!m) holds exactly once the mask is
            // zero on a frame of width r, so that the finite-raster
            // complement matches the whole-plane one.
            Mask framed = m;
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x)
                    if (y < r || y >= 32 - r || x < r || x >= 32 - r)
                        framed.data.at(0, 0, y, x) = 0.0;
            CHECK(equal(erode(framed, r), complement(dilate(complement(framed), r))));

            Mask w = weight_map(m, r);
            for (size_t i = 0; i < w.data.data.size(); ++i) {
                double wv = w.data.data[i];
                CHECK((wv == 0.0 || wv == 1.0));
                CHECK(wv == d.data.data[i] - e.data.data[i]);
                // extensivity: m <= dilate(m), erode(m) <= m
                CHECK(d.data.data[i] >= m.data.data[i]);
                CHECK(e.data.data[i] <= m.data.data[i]);
            }
        }
        // monotonicity in r
        Mask d2 = dilate(m, 2), d3 = dilate(m, 3);
        Mask e2 = erode(m, 2), e3 = erode(m, 3);
        for (size_t i = 0; i < d2.data.data.size(); ++i) {
            CHECK(d3.data.data[i] >= d2.data.data[i]);
            CHECK(e3.data.data[i] <= e2.data.data[i]);
        }
    }
}

TEST_CASE("soft weight_map input is binarized at 0.5; dilate rejects soft masks") {
    Tensor t(Shape(1, 1, 9, 9));
    t.at(0, 0, 4, 4) = 0.7;
    t.at(0, 0, 4, 5) = 0.4;
    Mask soft(t, Hardness::Soft);
    CHECK_THROWS_AS(dilate(soft, 1), std::invalid_argument);
    CHECK_THROWS_AS(erode(soft, 1), std::invalid_argument);
    Mask w = weight_map(soft, 1);
    // Only the 0.7 pixel survives binarization; band = its r=1 cross.
    CHECK(w.data.sum() == 5.0);

    Mask m(Tensor::full(Shape(1, 1, 9, 9), 0.0), Hardness::Hard);
    CHECK_THROWS_AS(dilate(m, 0), std::invalid_argument);
    CHECK_THROWS_AS(dilate(m, 4), std::invalid_argument);  // r >= min(H,W)/2
}
