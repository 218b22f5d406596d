#ifndef TRANSNET_TRIPLETS_HPP
#define TRANSNET_TRIPLETS_HPP

#include "transnet/autodiff.hpp"
#include "transnet/datamodel.hpp"

namespace transnet {

// Critic inputs, one constructor per role (see the boundary-critic losses).
// Outer triplets pair the image with a foreground mask, inner triplets with
// its complement.

Triplet fake_outer(const Image& x, const Mask& m_pred);
Triplet real_outer(const Image& x, const Mask& m_gt);
// mask = dilate(m_gt, r): a foreground that leaks outer background features.
Triplet pseudo_outer(const Image& x, const Mask& m_gt, int r);

Triplet fake_inner(const Image& x, const Mask& m_pred);
Triplet real_inner(const Image& x, const Mask& m_gt);
// The inner pseudo mask defaults to dilate(complement(m_gt), r), which
// leaks foreground features into the background region; an erode variant
// is selectable.
enum class PseudoInnerVariant { DilateComplement, ErodeComplement };
Triplet pseudo_inner(const Image& x, const Mask& m_gt, int r,
                     PseudoInnerVariant variant = PseudoInnerVariant::DilateComplement);

// Convex combination eps*I_e + (1-eps)*I_a of two same-side triplets.
Triplet interpolate(const Triplet& real, const Triplet& fake, double eps);

// Channel concatenation [image, mask, mask*image] for a batch; keeps the
// gradient path through a live predicted mask.
ad::Value triplet_concat(const ad::Value& images, const ad::Value& masks);

// Single triplet as a concatenated (1, 2C+1, H, W) tensor.
Tensor triplet_tensor(const Triplet& t);

}  // namespace transnet

#endif
