#ifndef TRANSNET_DATAMODEL_HPP
#define TRANSNET_DATAMODEL_HPP

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "transnet/tensor.hpp"

namespace transnet {

// RGB (or C-channel) raster in [0,1], stored as a (1,C,H,W) tensor.
struct Image {
    Tensor data;

    Image() = default;
    explicit Image(Tensor t);

    int channels() const { return data.shape.c; }
    int height() const { return data.shape.h; }
    int width() const { return data.shape.w; }
};

enum class Hardness { Hard, Soft };

// Single-channel mask in [0,1], stored as a (1,1,H,W) tensor. Hard masks
// contain only {0,1}.
struct Mask {
    Tensor data;
    Hardness hardness = Hardness::Hard;

    Mask() = default;
    Mask(Tensor t, Hardness h);

    bool is_hard() const { return hardness == Hardness::Hard; }
    int height() const { return data.shape.h; }
    int width() const { return data.shape.w; }

    Mask binarized(double threshold = 0.5) const;
};

struct LabeledSample {
    Image image;
    Mask mask;  // hard
    std::string stem;
    std::string category;

    LabeledSample() = default;
    LabeledSample(Image img, Mask m, std::string stem_ = "", std::string cat = "");
};

struct SourceDataset {
    std::vector<LabeledSample> samples;

    std::set<std::string> categories() const;
};

// Few-shot target pool. Unlabeled images expose no masks on the training
// path; evaluation samples live behind a separate accessor.
struct TargetDataset {
    std::vector<LabeledSample> labeled;
    std::vector<Image> unlabeled;
    std::set<std::string> categories;

    const std::vector<LabeledSample>& evaluation_samples() const { return eval_; }
    void set_evaluation_samples(std::vector<LabeledSample> s) { eval_ = std::move(s); }

  private:
    std::vector<LabeledSample> eval_;
};

enum class TripletSide { Outer, Inner };
enum class TripletKind { Real, Fake, Pseudo, Interpolated };

// Critic input [image, mask, masked image]. For non-interpolated kinds the
// masked image equals mask * image by construction.
struct Triplet {
    Image image;
    Mask mask;
    Image masked_image;
    TripletSide side = TripletSide::Outer;
    TripletKind kind = TripletKind::Real;
};

// Not-operation: [1] - m, hardness preserved.
Mask complement(const Mask& m);
// Channelwise broadcast elementwise product.
Image masked_image(const Image& x, const Mask& m);

// All scalar knobs of the training algorithm plus artifact-level settings
// (step budget, architecture widths, logging cadence).
struct TrainingConfig {
    double lambda_gp = 10.0;
    int n_critic = 5;
    int batch_size = 64;
    double adam_alpha = 1e-4;
    double adam_beta1 = 0.0;
    double adam_beta2 = 0.9;
    double tau = 1.0;
    double eta = 1.0;
    // Reserved weighting knob; accepted and persisted but consumed by no
    // loss term.
    double xi = 1.0;
    int radius_min = 0;  // 0 = derive from image_size
    int radius_max = 0;
    int image_size = 128;
    std::uint64_t seed = 0;
    std::set<std::string> ablation;
    int labeled_budget = 10;

    int steps = 1000;
    int eval_every = 50;
    int checkpoint_every = 200;
    int early_stop_patience = 0;  // evaluations without MIoU gain; 0 = off
    int net_levels = 4;
    int net_base_width = 16;
    int critic_base_width = 32;
    int critic_blocks = 5;
    // Inner pseudo masks: "dilate_complement" grows the background region
    // so it overlaps the object boundary; "erode_complement" shrinks it.
    std::string pseudo_inner = "dilate_complement";

    bool has_ablation(const std::string& flag) const { return ablation.count(flag) > 0; }

    // Fills radius_min/max from image_size when left at 0 and checks all
    // invariants; throws std::invalid_argument on violation.
    void finalize();

    std::string serialize() const;
    static TrainingConfig parse(const std::string& text);
    static const std::set<std::string>& known_ablations();
};

}  // namespace transnet

#endif
