#ifndef TRANSNET_LOSSES_HPP
#define TRANSNET_LOSSES_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include "transnet/autodiff.hpp"
#include "transnet/networks.hpp"
#include "transnet/transforms.hpp"

namespace transnet {

// Raised when a loss, gradient or network output stops being finite.
struct NonFiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Per-step scalar summary, serialized as one JSON line in the training log.
struct LossReport {
    double rec = 0, self_sup = 0;
    double adv_outer = 0, adv_inner = 0;
    double gen_total = 0;
    double critic_outer_total = 0, critic_inner_total = 0;
    double gp_outer = 0, gp_inner = 0;

    bool all_finite() const;
    std::string json_line(std::int64_t step) const;
};

// Mean squared difference over pixels and batch.
ad::Value reconstruction_loss(const ad::Value& m_pred, const ad::Value& m_gt);

// Boundary-aware equivariance loss: predictions on the warped and plain
// image are compared inside boundary bands. Weight maps are recomputed each
// call and enter as gradient-blocked constants. One transform and one
// radius per batch element.
ad::Value self_supervised_loss(const SegmentationNetwork& net, const ad::Value& x,
                               const std::vector<AffineTransform>& transforms,
                               const std::vector<int>& radii);

// The comparison itself, given the two prediction batches (m_plain on the
// original input, m_warped on the pre-warped input). Exposed so exactly
// equivariant prediction pairs can be checked directly.
ad::Value self_supervised_core(const ad::Value& m_plain, const ad::Value& m_warped,
                               const std::vector<AffineTransform>& transforms,
                               const std::vector<int>& radii);

// lambda * mean over batch of (||d score / d triplet||_2 - 1)^2, where the
// triplet batch is treated as the differentiation target. The returned node
// is differentiable w.r.t. the critic parameters. The callable form takes
// any map from a (N,C,H,W) batch to (N,1,1,1) scores.
ad::Value gradient_penalty(const std::function<ad::Value(const ad::Value&)>& score_fn,
                           const Tensor& interp_batch, double lambda);
ad::Value gradient_penalty(const BoundaryCritic& critic, const Tensor& interp_batch,
                           double lambda);

// 1/2 mean(fake) + 1/2 mean(pseudo) - mean(real) + gp. Passing a null
// pseudo score batch (the no-pseudo ablation) reassigns the fake weight
// to 1 so the real/fake terms stay balanced.
ad::Value critic_loss(const ad::Value& scores_fake, const ad::Value& scores_pseudo,
                      const ad::Value& scores_real, const ad::Value& gp);
inline ad::Value critic_loss_outer(const ad::Value& f, const ad::Value& p,
                                   const ad::Value& r, const ad::Value& gp) {
    return critic_loss(f, p, r, gp);
}
inline ad::Value critic_loss_inner(const ad::Value& f, const ad::Value& p,
                                   const ad::Value& r, const ad::Value& gp) {
    return critic_loss(f, p, r, gp);
}

// tau*rec + eta*sel - score_outer - score_inner; null terms are dropped
// (ablations and the zero-label configuration).
ad::Value generator_loss(const ad::Value& rec, const ad::Value& sel,
                         const ad::Value& score_outer, const ad::Value& score_inner,
                         double tau, double eta);

}  // namespace transnet

#endif
