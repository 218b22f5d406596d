#ifndef TRANSNET_NETWORKS_HPP
#define TRANSNET_NETWORKS_HPP

#include <string>
#include <vector>

#include "transnet/autodiff.hpp"
#include "transnet/datamodel.hpp"
#include "transnet/rng.hpp"

namespace transnet {

struct ConvLayer {
    ad::Value w, b;
    int stride = 1, pad = 0;

    ad::Value apply(const ad::Value& x) const {
        return ad::conv2d(x, w, b, stride, pad);
    }
};

// Shared parameter-set plumbing: flat (de)serialization and mutation audits.
class ParametricNet {
  public:
    virtual ~ParametricNet() = default;
    const std::vector<ad::Value>& params() const { return params_; }
    std::vector<ad::Value>& params() { return params_; }
    std::int64_t param_count() const;
    std::vector<double> flat_params() const;
    void set_flat_params(const std::vector<double>& flat);
    std::uint64_t param_hash() const;

  protected:
    ConvLayer add_conv(int in, int out, int k, int stride, int pad, Rng& rng);
    std::vector<ad::Value> params_;
};

// Encoder-decoder with skip connections and a sigmoid head; output is a
// soft mask (N,1,H,W) in (0,1). H and W must be divisible by 2^(levels-1).
class SegmentationNetwork : public ParametricNet {
  public:
    SegmentationNetwork(int in_channels, int base_width, int levels, Rng& rng);

    ad::Value forward(const ad::Value& x) const;
    // Inference mode: no graph recording.
    Mask segment(const Image& x) const;
    Tensor segment_batch(const Tensor& x) const;

    int in_channels() const { return in_channels_; }
    int base_width() const { return base_width_; }
    int levels() const { return levels_; }

  private:
    int in_channels_, base_width_, levels_;
    std::vector<ConvLayer> enc_a_, enc_b_;  // per level
    std::vector<ConvLayer> dec_a_, dec_b_;  // per decoder stage
    ConvLayer head_;
};

// Strided conv encoder ending in global average pooling and a linear scalar
// head. No batch-coupling normalization anywhere (gradient-penalty
// training requires per-sample scores).
class BoundaryCritic : public ParametricNet {
  public:
    BoundaryCritic(int in_channels, int base_width, int blocks, Rng& rng);

    // (N,C,H,W) triplet batch -> (N,1,1,1) unbounded scores.
    ad::Value forward(const ad::Value& triplet) const;

    int in_channels() const { return in_channels_; }
    int base_width() const { return base_width_; }
    int blocks() const { return int(convs_.size()); }

  private:
    int in_channels_, base_width_;
    std::vector<ConvLayer> convs_;
    ConvLayer head_;
};

}  // namespace transnet

#endif
