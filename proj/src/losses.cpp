#include "transnet/losses.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "transnet/morphology.hpp"

namespace transnet {

using ad::Value;

bool LossReport::all_finite() const {
    for (double v : {rec, self_sup, adv_outer, adv_inner, gen_total, critic_outer_total,
                     critic_inner_total, gp_outer, gp_inner})
        if (!std::isfinite(v)) return false;
    return true;
}

std::string LossReport::json_line(std::int64_t step) const {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "{\"step\":%lld,\"rec\":%.6g,\"self_sup\":%.6g,\"adv_outer\":%.6g,"
                  "\"adv_inner\":%.6g,\"gen_total\":%.6g,\"critic_outer_total\":%.6g,"
                  "\"critic_inner_total\":%.6g,\"gp_outer\":%.6g,\"gp_inner\":%.6g}",
                  static_cast<long long>(step), rec, self_sup, adv_outer, adv_inner,
                  gen_total, critic_outer_total, critic_inner_total, gp_outer, gp_inner);
    return buf;
}

Value reconstruction_loss(const Value& m_pred, const Value& m_gt) {
    if (!(m_pred->shape() == m_gt->shape()))
        throw std::invalid_argument("reconstruction_loss: shape mismatch");
    return ad::mean_all(ad::square(ad::sub(m_pred, m_gt)));
}

namespace {
// Boundary band of each predicted mask in the batch, as a gradient-blocked
// constant (morphology is non-differentiable).
Tensor band_constants(const Tensor& preds, const std::vector<int>& radii) {
    if (!preds.all_finite())
        throw NonFiniteError("non-finite predictions entering boundary bands");
    const Shape& s = preds.shape;
    Tensor bands(s);
    for (int n = 0; n < s.n; ++n) {
        Tensor one(Shape(1, 1, s.h, s.w));
        std::copy(preds.data.begin() + std::int64_t(n) * s.h * s.w,
                  preds.data.begin() + std::int64_t(n + 1) * s.h * s.w, one.data.begin());
        Mask band = weight_map(Mask(std::move(one), Hardness::Soft), radii[size_t(n)]);
        std::copy(band.data.data.begin(), band.data.data.end(),
                  bands.data.begin() + std::int64_t(n) * s.h * s.w);
    }
    return bands;
}
}  // namespace

Value self_supervised_core(const Value& m_plain, const Value& m_warped,
                           const std::vector<AffineTransform>& transforms,
                           const std::vector<int>& radii) {
    const Shape& s = m_plain->shape();
    if (int(transforms.size()) != s.n || int(radii.size()) != s.n)
        throw std::invalid_argument("self_supervised_core: need one transform and radius per sample");
    std::vector<std::array<double, 6>> mats;
    for (const auto& t : transforms) {
        if (!t.invertible())
            throw std::invalid_argument("self_supervised_core: degenerate transform");
        mats.push_back(t.m);
    }
    Value w_plain = ad::constant(band_constants(m_plain->value, radii));
    Value w_warped = ad::constant(band_constants(m_warped->value, radii));

    Value lhs = ad::mul(m_warped, w_warped);
    Value rhs = ad::warp_affine(ad::mul(m_plain, w_plain), mats);
    return ad::mean_all(ad::square(ad::sub(lhs, rhs)));
}

Value self_supervised_loss(const SegmentationNetwork& net, const Value& x,
                           const std::vector<AffineTransform>& transforms,
                           const std::vector<int>& radii) {
    std::vector<std::array<double, 6>> mats;
    for (const auto& t : transforms) {
        if (!t.invertible())
            throw std::invalid_argument("self_supervised_loss: degenerate transform");
        mats.push_back(t.m);
    }
    Value m_plain = net.forward(x);
    Value m_warped_in = net.forward(ad::warp_affine(x, mats));
    return self_supervised_core(m_plain, m_warped_in, transforms, radii);
}

Value gradient_penalty(const std::function<Value(const Value&)>& score_fn,
                       const Tensor& interp_batch, double lambda) {
    if (lambda == 0.0) return ad::constant(Tensor::scalar(0.0));
    Value interp = ad::leaf(interp_batch, true);
    Value scores = score_fn(interp);
    ad::GradMap gm = ad::backward(ad::sum_all(scores), /*create_graph=*/true);
    Value g = gm.at(interp);
    Value norm = ad::pow_const(ad::sum_chw(ad::square(g)), 0.5);
    return ad::scale(ad::mean_all(ad::square(ad::add_const(norm, -1.0))), lambda);
}

Value gradient_penalty(const BoundaryCritic& critic, const Tensor& interp_batch,
                       double lambda) {
    return gradient_penalty([&critic](const Value& x) { return critic.forward(x); },
                            interp_batch, lambda);
}

Value critic_loss(const Value& scores_fake, const Value& scores_pseudo,
                  const Value& scores_real, const Value& gp) {
    if (!scores_fake || !scores_real || !gp)
        throw std::invalid_argument("critic_loss: fake, real and gp terms are required");
    if (scores_pseudo && !(scores_pseudo->shape() == scores_fake->shape()))
        throw std::invalid_argument("critic_loss: score batch size mismatch");
    if (!(scores_real->shape() == scores_fake->shape()))
        throw std::invalid_argument("critic_loss: score batch size mismatch");
    Value loss;
    if (scores_pseudo) {
        loss = ad::add(ad::scale(ad::mean_all(scores_fake), 0.5),
                       ad::scale(ad::mean_all(scores_pseudo), 0.5));
    } else {
        loss = ad::mean_all(scores_fake);
    }
    loss = ad::sub(loss, ad::mean_all(scores_real));
    return ad::add(loss, gp);
}

Value generator_loss(const Value& rec, const Value& sel, const Value& score_outer,
                     const Value& score_inner, double tau, double eta) {
    Value total;
    auto accumulate = [&total](const Value& term) {
        if (!term) return;
        total = total ? ad::add(total, term) : term;
    };
    if (rec) accumulate(ad::scale(rec, tau));
    if (sel) accumulate(ad::scale(sel, eta));
    if (score_outer) accumulate(ad::neg(score_outer));
    if (score_inner) accumulate(ad::neg(score_inner));
    if (!total) total = ad::constant(Tensor::scalar(0.0));
    return total;
}

}  // namespace transnet
