#include "transnet/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <stdexcept>

namespace transnet {

namespace {
cv::Mat read_mat(const std::string& path, int flags) {
    cv::Mat m = cv::imread(path, flags);
    if (m.empty()) throw std::runtime_error("cannot read image: " + path);
    return m;
}
}  // namespace

Tensor load_image_rgb(const std::string& path) {
    cv::Mat bgr = read_mat(path, cv::IMREAD_COLOR);
    Tensor t(Shape(1, 3, bgr.rows, bgr.cols));
    for (int y = 0; y < bgr.rows; ++y) {
        const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            t.at(0, 0, y, x) = row[x][2] / 255.0;
            t.at(0, 1, y, x) = row[x][1] / 255.0;
            t.at(0, 2, y, x) = row[x][0] / 255.0;
        }
    }
    return t;
}

Tensor load_image_gray(const std::string& path) {
    cv::Mat g = read_mat(path, cv::IMREAD_GRAYSCALE);
    Tensor t(Shape(1, 1, g.rows, g.cols));
    for (int y = 0; y < g.rows; ++y) {
        const uint8_t* row = g.ptr<uint8_t>(y);
        for (int x = 0; x < g.cols; ++x) t.at(0, 0, y, x) = row[x] / 255.0;
    }
    return t;
}

namespace {
uint8_t to_byte(double v) {
    double s = v * 255.0 + 0.5;
    if (s < 0) s = 0;
    if (s > 255) s = 255;
    return static_cast<uint8_t>(s);
}
}  // namespace

void save_image_rgb(const std::string& path, const Tensor& t) {
    const Shape& s = t.shape;
    if (s.n != 1 || s.c != 3) throw std::invalid_argument("save_image_rgb: need (1,3,H,W)");
    cv::Mat bgr(s.h, s.w, CV_8UC3);
    for (int y = 0; y < s.h; ++y) {
        cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < s.w; ++x) {
            row[x][2] = to_byte(t.at(0, 0, y, x));
            row[x][1] = to_byte(t.at(0, 1, y, x));
            row[x][0] = to_byte(t.at(0, 2, y, x));
        }
    }
    if (!cv::imwrite(path, bgr)) throw std::runtime_error("cannot write image: " + path);
}

void save_image_gray(const std::string& path, const Tensor& t) {
    const Shape& s = t.shape;
    if (s.n != 1 || s.c != 1) throw std::invalid_argument("save_image_gray: need (1,1,H,W)");
    cv::Mat g(s.h, s.w, CV_8UC1);
    for (int y = 0; y < s.h; ++y) {
        uint8_t* row = g.ptr<uint8_t>(y);
        for (int x = 0; x < s.w; ++x) row[x] = to_byte(t.at(0, 0, y, x));
    }
    if (!cv::imwrite(path, g)) throw std::runtime_error("cannot write image: " + path);
}

Tensor resize_bilinear(const Tensor& t, int out_h, int out_w) {
    const Shape& s = t.shape;
    if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize_bilinear: bad size");
    if (s.h == out_h && s.w == out_w) return t;
    Tensor out(Shape(s.n, s.c, out_h, out_w));
    cv::Mat plane(s.h, s.w, CV_64FC1), resized;
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) plane.at<double>(y, x) = t.at(n, c, y, x);
            cv::resize(plane, resized, cv::Size(out_w, out_h), 0, 0, cv::INTER_LINEAR);
            for (int y = 0; y < out_h; ++y)
                for (int x = 0; x < out_w; ++x) out.at(n, c, y, x) = resized.at<double>(y, x);
        }
    }
    return out;
}

}  // namespace transnet
