#ifndef TRANSNET_AUTODIFF_HPP
#define TRANSNET_AUTODIFF_HPP

#include <array>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "transnet/tensor.hpp"

namespace transnet::ad {

class Node;
using Value = std::shared_ptr<Node>;

// Eager define-by-run graph node. Backward rules emit graph nodes
// themselves, so gradients are differentiable again (needed for the
// gradient penalty, whose parameter gradient differentiates through an
// input gradient).
class Node {
  public:
    Tensor value;
    bool requires_grad = false;
    std::vector<Value> parents;
    // Given the gradient flowing into this node, returns one gradient per
    // parent (empty Value for parents that do not require grad).
    std::function<std::vector<Value>(const Value& g)> backward_fn;

    explicit Node(Tensor v) : value(std::move(v)) {}
    const Shape& shape() const { return value.shape; }
};

// Grad recording is on by default; NoGradGuard disables node linking
// (values are still computed eagerly).
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool prev;
};

Value constant(Tensor t);
Value leaf(Tensor t, bool requires_grad);  // requires_grad survives NoGradGuard
Value detach(const Value& x);

// ---- elementwise ----
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value neg(const Value& x);
Value scale(const Value& x, double s);
Value add_const(const Value& x, double s);
Value square(const Value& x);
// x^p with the convention d/dx x^p = p*x^(p-1) and 0^(p-1) := 0 for p<1,
// so sqrt has a zero subgradient at 0.
Value pow_const(const Value& x, double p);
Value sigmoid(const Value& x);
Value leaky_relu(const Value& x, double slope);

// ---- broadcast / channel ops ----
// (N,C,H,W) * (N,1,H,W), broadcast over channels.
Value mul_bcast(const Value& x, const Value& m);
Value sum_channels(const Value& x);             // (N,C,H,W) -> (N,1,H,W)
Value repeat_channels(const Value& x, int c);   // (N,1,H,W) -> (N,C,H,W)
Value concat_channels(const std::vector<Value>& xs);
Value slice_channels(const Value& x, int c0, int c1);  // [c0, c1)

// ---- reductions and their adjoint broadcasts ----
Value sum_all(const Value& x);                       // -> (1,1,1,1)
Value mean_all(const Value& x);                      // -> (1,1,1,1)
Value sum_chw(const Value& x);                       // -> (N,1,1,1)
Value sum_hw(const Value& x);                        // -> (N,C,1,1)
Value sum_nhw(const Value& x);                       // -> (1,C,1,1)
Value broadcast_scalar(const Value& s, Shape shape); // (1,1,1,1) -> shape
Value repeat_chw(const Value& x, Shape shape);       // (N,1,1,1) -> shape
Value repeat_hw(const Value& x, Shape shape);        // (N,C,1,1) -> shape
Value repeat_nhw(const Value& x, Shape shape);       // (1,C,1,1) -> shape

// ---- convolution ----
// x: (N,Cin,H,W), w: (Cout,Cin,KH,KW). Output spatial: (H+2p-KH)/s+1.
Value conv_fwd(const Value& x, const Value& w, int stride, int pad);
// Adjoint of conv_fwd in x: g is output-shaped, result is input-shaped.
Value conv_dx(const Value& g, const Value& w, Shape xshape, int stride, int pad);
// Adjoint of conv_fwd in w: result is weight-shaped.
Value conv_dw(const Value& x, const Value& g, Shape wshape, int stride, int pad);
// b: (1,C,1,1) broadcast-added.
Value add_bias(const Value& x, const Value& b);
// conv_fwd + add_bias.
Value conv2d(const Value& x, const Value& w, const Value& b, int stride, int pad);

// ---- resampling ----
Value upsample2_nearest(const Value& x);
Value downsample2_sum(const Value& x);
// Bilinear affine warp with zero padding outside the grid. mats holds one
// 2x3 row-major matrix per batch element mapping normalized output coords
// (y,x in [-1,1]) to normalized input coords.
Value warp_affine(const Value& x, const std::vector<std::array<double, 6>>& mats);
Value warp_affine_adjoint(const Value& g, const std::vector<std::array<double, 6>>& mats,
                          Shape xshape);

// ---- backward ----
// Reverse-mode gradients of a scalar root. When create_graph is true the
// returned gradients are differentiable graph nodes; otherwise they are
// computed under NoGradGuard.
class GradMap {
  public:
    std::unordered_map<const Node*, Value> grads;
    // Gradient of the root w.r.t. x; zero tensor if x did not participate.
    Value at(const Value& x) const;
    bool contains(const Value& x) const { return grads.count(x.get()) > 0; }
};

GradMap backward(const Value& root, bool create_graph = false);

}  // namespace transnet::ad

#endif
