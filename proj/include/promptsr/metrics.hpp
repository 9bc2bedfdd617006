#pragma once

// Quality metrics on the Y channel of YCbCr, with boundary cropping.

#include <limits>

#include "promptsr/data.hpp"

namespace promptsr::metrics {

// 10*log10(255^2 / MSE) over Y after shaving `crop` pixels on all sides;
// returns +infinity when the images agree exactly
double psnr_y(const data::ImageBuffer& a, const data::ImageBuffer& b, int crop);

// single-scale SSIM: 11x11 Gaussian window sigma 1.5, K1=0.01 K2=0.03 L=255,
// averaged over fully valid window positions only
double ssim_y(const data::ImageBuffer& a, const data::ImageBuffer& b, int crop);

struct EvalEntry {
    std::string image;
    double psnr = 0;
    double ssim = 0;
};

struct EvalReport {
    std::vector<EvalEntry> entries;
    int crop_border = 0;

    double mean_psnr() const;
    double mean_ssim() const;
    // CSV: image,psnr,ssim per row plus a trailing mean row
    std::string to_csv() const;
};

}  // namespace promptsr::metrics
