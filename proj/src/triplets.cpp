#include "transnet/triplets.hpp"

#include <stdexcept>

#include "transnet/morphology.hpp"

namespace transnet {

namespace {
Triplet build(const Image& x, Mask m, TripletSide side, TripletKind kind) {
    Triplet t;
    t.masked_image = masked_image(x, m);
    t.image = x;
    t.mask = std::move(m);
    t.side = side;
    t.kind = kind;
    return t;
}

void require_hard(const Mask& m, const char* op) {
    if (!m.is_hard())
        throw std::invalid_argument(std::string(op) + ": ground-truth mask must be hard");
}
}  // namespace

Triplet fake_outer(const Image& x, const Mask& m_pred) {
    return build(x, m_pred, TripletSide::Outer, TripletKind::Fake);
}

Triplet real_outer(const Image& x, const Mask& m_gt) {
    require_hard(m_gt, "real_outer");
    return build(x, m_gt, TripletSide::Outer, TripletKind::Real);
}

Triplet pseudo_outer(const Image& x, const Mask& m_gt, int r) {
    require_hard(m_gt, "pseudo_outer");
    return build(x, dilate(m_gt, r), TripletSide::Outer, TripletKind::Pseudo);
}

Triplet fake_inner(const Image& x, const Mask& m_pred) {
    return build(x, complement(m_pred), TripletSide::Inner, TripletKind::Fake);
}

Triplet real_inner(const Image& x, const Mask& m_gt) {
    require_hard(m_gt, "real_inner");
    return build(x, complement(m_gt), TripletSide::Inner, TripletKind::Real);
}

Triplet pseudo_inner(const Image& x, const Mask& m_gt, int r, PseudoInnerVariant variant) {
    require_hard(m_gt, "pseudo_inner");
    Mask mc = complement(m_gt);
    Mask pm = variant == PseudoInnerVariant::DilateComplement ? dilate(mc, r) : erode(mc, r);
    return build(x, std::move(pm), TripletSide::Inner, TripletKind::Pseudo);
}

Triplet interpolate(const Triplet& real, const Triplet& fake, double eps) {
    if (real.side != fake.side)
        throw std::invalid_argument("interpolate: triplet side mismatch");
    if (eps < 0.0 || eps > 1.0)
        throw std::invalid_argument("interpolate: eps must be in [0,1]");
    if (!(real.image.data.shape == fake.image.data.shape))
        throw std::invalid_argument("interpolate: shape mismatch");
    auto mix = [eps](const Tensor& a, const Tensor& b) {
        Tensor out = a;
        for (size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = eps * a.data[i] + (1.0 - eps) * b.data[i];
        return out;
    };
    Triplet t;
    t.image = Image(mix(real.image.data, fake.image.data));
    t.mask = Mask(mix(real.mask.data, fake.mask.data), Hardness::Soft);
    t.masked_image = Image(mix(real.masked_image.data, fake.masked_image.data));
    t.side = real.side;
    t.kind = TripletKind::Interpolated;
    return t;
}

ad::Value triplet_concat(const ad::Value& images, const ad::Value& masks) {
    return ad::concat_channels({images, masks, ad::mul_bcast(images, masks)});
}

Tensor triplet_tensor(const Triplet& t) {
    ad::NoGradGuard ng;
    return ad::concat_channels({ad::constant(t.image.data), ad::constant(t.mask.data),
                                ad::constant(t.masked_image.data)})
        ->value;
}

}  // namespace transnet
