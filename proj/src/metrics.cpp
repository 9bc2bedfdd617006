#include "promptsr/metrics.hpp"

#include <cmath>
#include <sstream>

namespace promptsr::metrics {

namespace {

void check_pair(const data::ImageBuffer& a, const data::ImageBuffer& b, int crop) {
    if (a.width != b.width || a.height != b.height)
        throw ContractError("metric operands differ: " + std::to_string(a.width) + "x" +
                            std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                            std::to_string(b.height));
    if (crop < 0 || 2 * crop >= std::min(a.width, a.height))
        throw ContractError("crop border " + std::to_string(crop) + " too large for " +
                            std::to_string(a.width) + "x" + std::to_string(a.height));
}

// Y planes after cropping, as doubles
std::vector<double> y_plane(const data::ImageBuffer& img, int crop, int& w, int& h) {
    Tensor y = data::rgb_to_y(img);
    w = img.width - 2 * crop;
    h = img.height - 2 * crop;
    std::vector<double> out(size_t(w) * h);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            out[size_t(r) * w + c] = y.data()[size_t(r + crop) * img.width + (c + crop)];
    return out;
}

}  // namespace

double psnr_y(const data::ImageBuffer& a, const data::ImageBuffer& b, int crop) {
    check_pair(a, b, crop);
    int w = 0, h = 0;
    auto ya = y_plane(a, crop, w, h);
    auto yb = y_plane(b, crop, w, h);
    double mse = 0;
    for (size_t i = 0; i < ya.size(); ++i) {
        const double d = ya[i] - yb[i];
        mse += d * d;
    }
    mse /= double(ya.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim_y(const data::ImageBuffer& a, const data::ImageBuffer& b, int crop) {
    check_pair(a, b, crop);
    int w = 0, h = 0;
    auto ya = y_plane(a, crop, w, h);
    auto yb = y_plane(b, crop, w, h);
    constexpr int win = 11;
    if (w < win || h < win)
        throw ContractError("image too small for SSIM after crop: " + std::to_string(w) + "x" +
                            std::to_string(h));

    // separable Gaussian, sigma 1.5, normalized
    double g[win];
    double gsum = 0;
    for (int i = 0; i < win; ++i) {
        const double d = i - (win - 1) / 2.0;
        g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        gsum += g[i];
    }
    for (double& v : g) v /= gsum;

    const double c1 = (0.01 * 255) * (0.01 * 255);
    const double c2 = (0.03 * 255) * (0.03 * 255);

    // windowed moments via two separable passes over the five product maps
    const int ww = w - win + 1, wh = h - win + 1;
    auto filt = [&](const std::vector<double>& src) {
        std::vector<double> tmp(size_t(h) * ww), out(size_t(wh) * ww);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < ww; ++x) {
                double acc = 0;
                for (int i = 0; i < win; ++i) acc += g[i] * src[size_t(y) * w + x + i];
                tmp[size_t(y) * ww + x] = acc;
            }
        for (int y = 0; y < wh; ++y)
            for (int x = 0; x < ww; ++x) {
                double acc = 0;
                for (int i = 0; i < win; ++i) acc += g[i] * tmp[size_t(y + i) * ww + x];
                out[size_t(y) * ww + x] = acc;
            }
        return out;
    };
    std::vector<double> aa(ya.size()), bb(ya.size()), ab(ya.size());
    for (size_t i = 0; i < ya.size(); ++i) {
        aa[i] = ya[i] * ya[i];
        bb[i] = yb[i] * yb[i];
        ab[i] = ya[i] * yb[i];
    }
    auto mu1 = filt(ya), mu2 = filt(yb), s11 = filt(aa), s22 = filt(bb), s12 = filt(ab);
    double total = 0;
    for (size_t i = 0; i < mu1.size(); ++i) {
        const double m1 = mu1[i], m2 = mu2[i];
        const double v1 = s11[i] - m1 * m1;
        const double v2 = s22[i] - m2 * m2;
        const double cov = s12[i] - m1 * m2;
        total += ((2 * m1 * m2 + c1) * (2 * cov + c2)) /
                 ((m1 * m1 + m2 * m2 + c1) * (v1 + v2 + c2));
    }
    return total / double(mu1.size());
}

double EvalReport::mean_psnr() const {
    double s = 0;
    for (const auto& e : entries) s += e.psnr;
    return entries.empty() ? 0 : s / entries.size();
}

double EvalReport::mean_ssim() const {
    double s = 0;
    for (const auto& e : entries) s += e.ssim;
    return entries.empty() ? 0 : s / entries.size();
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "image,psnr,ssim\n";
    os.precision(6);
    os << std::fixed;
    for (const auto& e : entries) os << e.image << "," << e.psnr << "," << e.ssim << "\n";
    os << "mean," << mean_psnr() << "," << mean_ssim() << "\n";
    return os.str();
}

}  // namespace promptsr::metrics
