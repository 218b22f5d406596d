#include "transnet/transforms.hpp"

#include <cmath>
#include <stdexcept>

#include "transnet/autodiff.hpp"

namespace transnet {

namespace {
constexpr double kDegToRad = 0.017453292519943295;

Tensor warp_tensor(const Tensor& t, const AffineTransform& A) {
    if (!A.invertible())
        throw std::invalid_argument("warp: degenerate affine transform");
    ad::NoGradGuard ng;
    ad::Value out = ad::warp_affine(ad::constant(t), {A.m});
    Tensor r = out->value;
    for (double& v : r.data) v = std::min(1.0, std::max(0.0, v));
    return r;
}
}  // namespace

bool AffineTransform::invertible() const { return std::fabs(det()) > 1e-6; }

AffineTransform AffineTransform::inverse() const {
    if (!invertible())
        throw std::invalid_argument("AffineTransform::inverse: degenerate matrix");
    const double d = det();
    AffineTransform r;
    r.m[0] = m[4] / d;
    r.m[1] = -m[1] / d;
    r.m[3] = -m[3] / d;
    r.m[4] = m[0] / d;
    r.m[2] = -(r.m[0] * m[2] + r.m[1] * m[5]);
    r.m[5] = -(r.m[3] * m[2] + r.m[4] * m[5]);
    return r;
}

Image warp(const Image& x, const AffineTransform& A) {
    return Image(warp_tensor(x.data, A));
}

Mask warp(const Mask& m, const AffineTransform& A) {
    return Mask(warp_tensor(m.data, A), Hardness::Soft);
}

AffineTransform make_affine(double rot_deg, double scale, double ty, double tx, bool hflip) {
    if (scale <= 0) throw std::invalid_argument("make_affine: scale must be positive");
    // Forward map: p_out = R(rot) * scale * Flip * p_in + 2*(ty,tx).
    // The sampling matrix is its inverse: Flip * (1/scale) * R(-rot).
    const double a = rot_deg * kDegToRad;
    const double c = std::cos(a), s = std::sin(a);
    const double inv = 1.0 / scale;
    const double fx = hflip ? -1.0 : 1.0;
    AffineTransform A;
    // R(-a) = [[c, s], [-s, c]] in (y,x) coordinates.
    A.m[0] = inv * c;
    A.m[1] = inv * s;
    A.m[3] = fx * inv * -s;
    A.m[4] = fx * inv * c;
    const double tny = 2.0 * ty, tnx = 2.0 * tx;
    A.m[2] = -(A.m[0] * tny + A.m[1] * tnx);
    A.m[5] = -(A.m[3] * tny + A.m[4] * tnx);
    return A;
}

AffineDraw sample_transform(Rng& rng, const TransformRanges& ranges) {
    AffineDraw d;
    d.rot_deg = rng.uniform(-ranges.max_rot_deg, ranges.max_rot_deg);
    d.scale = rng.uniform(ranges.scale_min, ranges.scale_max);
    d.ty = rng.uniform(-ranges.max_translate, ranges.max_translate);
    d.tx = rng.uniform(-ranges.max_translate, ranges.max_translate);
    d.hflip = rng.bernoulli(ranges.hflip_prob);
    d.A = make_affine(d.rot_deg, d.scale, d.ty, d.tx, d.hflip);
    return d;
}

}  // namespace transnet
