#ifndef TRANSNET_METRICS_HPP
#define TRANSNET_METRICS_HPP

#include <cstdint>

#include "transnet/datamodel.hpp"

namespace transnet {

// 2x2 pixel confusion counts indexed [gt][pred] over {background=0, foreground=1}.
struct ConfusionMatrix {
    std::uint64_t counts[2][2] = {{0, 0}, {0, 0}};

    std::uint64_t total() const {
        return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
    }
    void merge(const ConfusionMatrix& o) {
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) counts[i][j] += o.counts[i][j];
    }
};

// Binarizes pred at threshold and adds per-pixel counts.
void accumulate(ConfusionMatrix& cm, const Mask& pred, const Mask& gt,
                double threshold = 0.5);

struct Scores {
    double pa = 0, mpa = 0, miou = 0, fwiou = 0;
};

// PA = trace/total; MPA = mean per-class recall; MIoU = mean per-class
// TP/(TP+FP+FN); FWIoU = sum of class-frequency-weighted IoU. Classes with
// zero ground-truth pixels are excluded from the MPA/MIoU averages.
Scores scores(const ConfusionMatrix& cm);

}  // namespace transnet

#endif
