#include "transnet/morphology.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace transnet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D squared-distance transform (Felzenszwalb & Huttenlocher lower
// envelope of parabolas). f[i] is the source cost, out[i] the min over j
// of (i-j)^2 + f[j].
void dt1d(const double* f, double* out, int n, int* v, double* z) {
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        if (f[q] == kInf) continue;
        double s;
        while (true) {
            if (f[v[k]] == kInf) {
                // previous parabola is absent; replace it
                if (k == 0) {
                    v[0] = q;
                    z[0] = -kInf;
                    z[1] = kInf;
                    break;
                }
                --k;
                continue;
            }
            s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) /
                (2.0 * q - 2.0 * v[k]);
            if (s <= z[k]) {
                --k;
            } else {
                ++k;
                v[k] = q;
                z[k] = s;
                z[k + 1] = kInf;
                break;
            }
        }
    }
    if (f[v[0]] == kInf) {
        for (int q = 0; q < n; ++q) out[q] = kInf;
        return;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        out[q] = double(q - v[k]) * (q - v[k]) + f[v[k]];
    }
}

// Exact squared Euclidean distance to the nearest pixel where src > 0.5.
std::vector<double> squared_edt(const Tensor& src) {
    const int H = src.shape.h, W = src.shape.w;
    std::vector<double> d(size_t(H) * W);
    for (size_t i = 0; i < d.size(); ++i) d[i] = src.data[i] > 0.5 ? 0.0 : kInf;

    const int n = std::max(H, W);
    std::vector<double> f(n), out(n), z(size_t(n) + 1);
    std::vector<int> v(n);
    // columns
    for (int x = 0; x < W; ++x) {
        for (int y = 0; y < H; ++y) f[y] = d[size_t(y) * W + x];
        dt1d(f.data(), out.data(), H, v.data(), z.data());
        for (int y = 0; y < H; ++y) d[size_t(y) * W + x] = out[y];
    }
    // rows
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) f[x] = d[size_t(y) * W + x];
        dt1d(f.data(), out.data(), W, v.data(), z.data());
        for (int x = 0; x < W; ++x) d[size_t(y) * W + x] = out[x];
    }
    return d;
}

void check_args(const Mask& m, int r, const char* op) {
    if (!m.is_hard())
        throw std::invalid_argument(std::string(op) + ": mask must be hard (binarize first)");
    int lim = std::min(m.height(), m.width()) / 2;
    if (r < 1 || r >= lim)
        throw std::invalid_argument(std::string(op) + ": radius out of range [1, min(H,W)/2)");
}

}  // namespace

DiskStrel DiskStrel::make(int radius) {
    if (radius < 1) throw std::invalid_argument("DiskStrel: radius must be >= 1");
    DiskStrel s;
    s.radius = radius;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dy * dy + dx * dx <= radius * radius) s.offsets.emplace_back(dy, dx);
    return s;
}

Mask dilate(const Mask& m, int r) {
    check_args(m, r, "dilate");
    std::vector<double> d = squared_edt(m.data);
    Tensor out(m.data.shape);
    const double rr = double(r) * r;
    for (size_t i = 0; i < d.size(); ++i) out.data[i] = d[i] <= rr ? 1.0 : 0.0;
    return Mask(std::move(out), Hardness::Hard);
}

Mask erode(const Mask& m, int r) {
    check_args(m, r, "erode");
    // Out-of-grid positions count as background, so the mask also erodes
    // against the grid edge: a pixel survives only if both the nearest
    // background pixel and the nearest out-of-grid position are farther
    // than r.
    std::vector<double> d = squared_edt(complement(m).data);
    const int H = m.height(), W = m.width();
    Tensor out(m.data.shape);
    const double rr = double(r) * r;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            int edge = std::min(std::min(y + 1, H - y), std::min(x + 1, W - x));
            double lim = std::min(d[size_t(y) * W + x], double(edge) * edge);
            out.at(0, 0, y, x) = lim > rr ? 1.0 : 0.0;
        }
    return Mask(std::move(out), Hardness::Hard);
}

Mask weight_map(const Mask& m, int r) {
    Mask hard = m.is_hard() ? m : m.binarized(0.5);
    Mask d = dilate(hard, r);
    Mask e = erode(hard, r);
    Tensor out = d.data;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= e.data.data[i];
    return Mask(std::move(out), Hardness::Hard);
}

}  // namespace transnet
