#ifndef TRANSNET_TENSOR_HPP
#define TRANSNET_TENSOR_HPP

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace transnet {

// Dense NCHW tensor of doubles. Scalars live in a (1,1,1,1) tensor,
// per-channel vectors in (1,C,1,1), flat feature batches in (N,F,1,1).
struct Shape {
    int n = 1, c = 1, h = 1, w = 1;

    Shape() = default;
    Shape(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {}

    std::int64_t size() const {
        return std::int64_t(n) * c * h * w;
    }
    bool operator==(const Shape& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(s), data(static_cast<size_t>(s.size()), 0.0) {}
    Tensor(Shape s, double fill) : shape(s), data(static_cast<size_t>(s.size()), fill) {}

    static Tensor zeros(Shape s) { return Tensor(s); }
    static Tensor full(Shape s, double v) { return Tensor(s, v); }
    static Tensor scalar(double v) { return Tensor(Shape(1, 1, 1, 1), v); }

    std::int64_t size() const { return shape.size(); }

    double& at(int n, int c, int h, int w) {
        return data[((std::int64_t(n) * shape.c + c) * shape.h + h) * shape.w + w];
    }
    double at(int n, int c, int h, int w) const {
        return data[((std::int64_t(n) * shape.c + c) * shape.h + h) * shape.w + w];
    }

    double item() const {
        if (size() != 1) throw std::logic_error("Tensor::item on non-scalar " + shape.str());
        return data[0];
    }

    bool all_finite() const;
    double min() const;
    double max() const;
    double sum() const;
    double mean() const { return sum() / double(size()); }
};

// FNV-1a over the raw bytes; used for parameter-mutation audits.
std::uint64_t hash_bytes(const void* p, size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_tensor(const Tensor& t);

}  // namespace transnet

#endif
