#ifndef TRANSNET_MORPHOLOGY_HPP
#define TRANSNET_MORPHOLOGY_HPP

#include <utility>
#include <vector>

#include "transnet/datamodel.hpp"

namespace transnet {

// Closed-disk structuring element: offsets (dy,dx) with dy^2+dx^2 <= r^2.
struct DiskStrel {
    int radius = 1;
    std::vector<std::pair<int, int>> offsets;

    static DiskStrel make(int radius);
};

// Output pixel is 1 iff any input pixel within Euclidean distance r is 1.
// Out-of-grid positions are background. Requires a hard mask and
// 1 <= r < min(H,W)/2.
Mask dilate(const Mask& m, int r);

// Output pixel is 1 iff every position within distance r (out-of-grid
// counted as background) is 1, so masks touching the border shrink. Agrees
// with complement(dilate(complement(m),r)) wherever the complement's
// in-grid content determines the result, i.e. for masks that are zero on a
// border frame of width >= r.
Mask erode(const Mask& m, int r);

// Boundary-neighborhood band: dilate(m,r) - erode(m,r) after binarizing m
// at 0.5. Always in {0,1}.
Mask weight_map(const Mask& m, int r);

}  // namespace transnet

#endif
