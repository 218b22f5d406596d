#include "transnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace transnet {

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::min() const {
    return *std::min_element(data.begin(), data.end());
}

double Tensor::max() const {
    return *std::max_element(data.begin(), data.end());
}

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data) s += v;
    return s;
}

std::uint64_t hash_bytes(const void* p, size_t len, std::uint64_t seed) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    std::uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_tensor(const Tensor& t) {
    return hash_bytes(t.data.data(), t.data.size() * sizeof(double));
}

}  // namespace transnet
