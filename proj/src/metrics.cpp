#include "transnet/metrics.hpp"

#include <stdexcept>

namespace transnet {

void accumulate(ConfusionMatrix& cm, const Mask& pred, const Mask& gt, double threshold) {
    if (pred.height() != gt.height() || pred.width() != gt.width())
        throw std::invalid_argument("accumulate: shape mismatch");
    if (!gt.is_hard()) throw std::invalid_argument("accumulate: gt must be hard");
    for (size_t i = 0; i < gt.data.data.size(); ++i) {
        int g = gt.data.data[i] > 0.5 ? 1 : 0;
        int p = pred.data.data[i] >= threshold ? 1 : 0;
        ++cm.counts[g][p];
    }
}

Scores scores(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw std::invalid_argument("scores: empty confusion matrix");
    const double total = double(cm.total());
    Scores s;
    s.pa = double(cm.counts[0][0] + cm.counts[1][1]) / total;

    int present = 0;
    double recall_sum = 0, iou_sum = 0, fwiou = 0;
    for (int c = 0; c < 2; ++c) {
        const double gt_c = double(cm.counts[c][0] + cm.counts[c][1]);
        if (gt_c == 0) continue;
        ++present;
        const double tp = double(cm.counts[c][c]);
        const double fp = double(cm.counts[1 - c][c]);
        const double fn = gt_c - tp;
        recall_sum += tp / gt_c;
        const double denom = tp + fp + fn;
        const double iou = denom > 0 ? tp / denom : 1.0;
        iou_sum += iou;
        fwiou += (gt_c / total) * iou;
    }
    s.mpa = recall_sum / present;
    s.miou = iou_sum / present;
    s.fwiou = fwiou;
    return s;
}

}  // namespace transnet
