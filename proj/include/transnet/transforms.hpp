#ifndef TRANSNET_TRANSFORMS_HPP
#define TRANSNET_TRANSFORMS_HPP

#include <array>

#include "transnet/datamodel.hpp"
#include "transnet/rng.hpp"

namespace transnet {

// Row-major 2x3 matrix mapping normalized output coordinates (y,x in
// [-1,1]^2) to normalized input coordinates: in = L * out + t.
struct AffineTransform {
    std::array<double, 6> m = {1, 0, 0, 0, 1, 0};

    static AffineTransform identity() { return {}; }
    double det() const { return m[0] * m[4] - m[1] * m[3]; }
    bool invertible() const;
    AffineTransform inverse() const;
};

// Bilinear resampling with zero fill outside the grid. The warped mask is
// soft even when the input is hard.
Image warp(const Image& x, const AffineTransform& A);
Mask warp(const Mask& m, const AffineTransform& A);

// Parameters behind a sampled transform, for auditing.
struct AffineDraw {
    AffineTransform A;
    double rot_deg = 0;
    double scale = 1;
    double ty = 0, tx = 0;  // translation as fraction of image size
    bool hflip = false;
};

struct TransformRanges {
    double max_rot_deg = 30.0;
    double scale_min = 0.8, scale_max = 1.25;
    double max_translate = 0.1;  // fraction of size
    double hflip_prob = 0.5;
};

// Rotation, isotropic scale, translation and horizontal flip drawn from the
// given ranges; deterministic given the rng state.
AffineDraw sample_transform(Rng& rng, const TransformRanges& ranges = {});

// Builds the sampling matrix from explicit parameters (the inverse of the
// forward flip->scale->rotate->translate map).
AffineTransform make_affine(double rot_deg, double scale, double ty, double tx, bool hflip);

}  // namespace transnet

#endif
