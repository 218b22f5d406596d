#include "transnet/networks.hpp"

#include <cmath>
#include <stdexcept>

namespace transnet {

using ad::Value;

std::int64_t ParametricNet::param_count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
}

std::vector<double> ParametricNet::flat_params() const {
    std::vector<double> flat;
    flat.reserve(size_t(param_count()));
    for (const auto& p : params_)
        flat.insert(flat.end(), p->value.data.begin(), p->value.data.end());
    return flat;
}

void ParametricNet::set_flat_params(const std::vector<double>& flat) {
    if (std::int64_t(flat.size()) != param_count())
        throw std::invalid_argument("set_flat_params: size mismatch");
    size_t off = 0;
    for (auto& p : params_) {
        std::copy(flat.begin() + off, flat.begin() + off + p->value.data.size(),
                  p->value.data.begin());
        off += p->value.data.size();
    }
}

std::uint64_t ParametricNet::param_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params_)
        h = hash_bytes(p->value.data.data(), p->value.data.size() * sizeof(double), h);
    return h;
}

ConvLayer ParametricNet::add_conv(int in, int out, int k, int stride, int pad, Rng& rng) {
    // He-style fan-in init (uniform bound sqrt(6/fan) gives variance 2/fan),
    // zero bias. Smaller scales make activations decay geometrically with
    // depth and the network starts inside the squashed all-background
    // attractor.
    const double bound = std::sqrt(6.0 / (double(in) * k * k));
    Tensor w(Shape(out, in, k, k));
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    Tensor b(Shape(1, out, 1, 1));
    ConvLayer layer{ad::leaf(std::move(w), true), ad::leaf(std::move(b), true), stride, pad};
    params_.push_back(layer.w);
    params_.push_back(layer.b);
    return layer;
}

SegmentationNetwork::SegmentationNetwork(int in_channels, int base_width, int levels, Rng& rng)
    : in_channels_(in_channels), base_width_(base_width), levels_(levels) {
    if (levels < 1) throw std::invalid_argument("SegmentationNetwork: levels must be >= 1");
    auto width = [&](int l) { return base_width << l; };
    for (int l = 0; l < levels; ++l) {
        int cin = l == 0 ? in_channels : width(l - 1);
        int stride = l == 0 ? 1 : 2;
        enc_a_.push_back(add_conv(cin, width(l), 3, stride, 1, rng));
        enc_b_.push_back(add_conv(width(l), width(l), 3, 1, 1, rng));
    }
    for (int l = levels - 1; l >= 1; --l) {
        dec_a_.push_back(add_conv(width(l), width(l - 1), 3, 1, 1, rng));
        dec_b_.push_back(add_conv(2 * width(l - 1), width(l - 1), 3, 1, 1, rng));
    }
    head_ = add_conv(base_width, 1, 1, 1, 0, rng);
    // Near-zero head: initial logits stay close to 0, so predictions start
    // near 0.5 where the sigmoid-MSE gradient is strongest instead of
    // collapsing into a saturated all-background state.
    for (double& v : head_.w->value.data) v *= 0.1;
}

Value SegmentationNetwork::forward(const Value& x) const {
    const Shape& s = x->shape();
    if (s.c != in_channels_)
        throw std::invalid_argument("SegmentationNetwork: wrong channel count");
    const int div = 1 << (levels_ - 1);
    if (s.h % div || s.w % div)
        throw std::invalid_argument("SegmentationNetwork: resolution not divisible by 2^(levels-1)");

    const double slope = 0.1;
    std::vector<Value> skips;
    Value h = x;
    for (int l = 0; l < levels_; ++l) {
        h = ad::leaky_relu(enc_a_[l].apply(h), slope);
        h = ad::leaky_relu(enc_b_[l].apply(h), slope);
        skips.push_back(h);
    }
    for (int i = 0; i < levels_ - 1; ++i) {
        h = ad::upsample2_nearest(h);
        h = ad::leaky_relu(dec_a_[i].apply(h), slope);
        h = ad::concat_channels({h, skips[levels_ - 2 - i]});
        h = ad::leaky_relu(dec_b_[i].apply(h), slope);
    }
    return ad::sigmoid(head_.apply(h));
}

Mask SegmentationNetwork::segment(const Image& x) const {
    ad::NoGradGuard ng;
    Value out = forward(ad::constant(x.data));
    return Mask(out->value, Hardness::Soft);
}

Tensor SegmentationNetwork::segment_batch(const Tensor& x) const {
    ad::NoGradGuard ng;
    return forward(ad::constant(x))->value;
}

BoundaryCritic::BoundaryCritic(int in_channels, int base_width, int blocks, Rng& rng)
    : in_channels_(in_channels), base_width_(base_width) {
    if (blocks < 1) throw std::invalid_argument("BoundaryCritic: blocks must be >= 1");
    int cin = in_channels;
    for (int i = 0; i < blocks; ++i) {
        // widths w, 2w, 4w, 8w, 8w, ...
        int cout = base_width << std::min(i, 3);
        convs_.push_back(add_conv(cin, cout, 4, 2, 1, rng));
        cin = cout;
    }
    head_ = add_conv(cin, 1, 1, 1, 0, rng);
}

Value BoundaryCritic::forward(const Value& triplet) const {
    const Shape& s = triplet->shape();
    if (s.c != in_channels_)
        throw std::invalid_argument("BoundaryCritic: wrong channel count (triplet side mismatch?)");
    Value h = triplet;
    for (const auto& conv : convs_) h = ad::leaky_relu(conv.apply(h), 0.2);
    // Global average pool, then linear scalar head.
    const Shape& hs = h->shape();
    Value pooled = ad::scale(ad::sum_hw(h), 1.0 / (double(hs.h) * hs.w));
    return head_.apply(pooled);
}

}  // namespace transnet
