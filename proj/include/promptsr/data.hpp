#pragma once

// Image IO (binary PPM), bicubic resampling, color conversion, dataset
// manifests, patch sampling and dihedral augmentation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "promptsr/tensor.hpp"

namespace promptsr::data {

struct ImageBuffer {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;  // row-major RGB

    static ImageBuffer create(int w, int h) {
        ImageBuffer b;
        b.width = w;
        b.height = h;
        b.pixels.assign(size_t(3) * w * h, 0);
        return b;
    }
    uint8_t& at(int y, int x, int c) { return pixels[(size_t(y) * width + x) * 3 + c]; }
    uint8_t at(int y, int x, int c) const { return pixels[(size_t(y) * width + x) * 3 + c]; }
};

ImageBuffer read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageBuffer& img);

// separable cubic convolution, a = -0.5, kernel widened by the scale factor
// when downscaling, weights normalized to unit sum, rounded half away from
// zero and clamped to [0,255]
ImageBuffer bicubic_resize(const ImageBuffer& img, int out_w, int out_h);

// ITU-R BT.601 studio swing: Y = 16 + (65.738 R + 129.057 G + 25.064 B) / 256
Tensor rgb_to_y(const ImageBuffer& img);

Tensor to_tensor(const ImageBuffer& img);        // [H,W,3] in [0,1]
ImageBuffer from_tensor(const Tensor& t);        // clamp to [0,1], scale, round

// the 8-element dihedral group; id 0 is the identity
ImageBuffer augment(const ImageBuffer& img, int aug_id);
int augment_inverse(int aug_id);

ImageBuffer crop(const ImageBuffer& img, int x0, int y0, int w, int h);

struct ManifestRecord {
    std::string hr_path;
    std::optional<std::string> lr_path;
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;
    int scale = 2;
};

// one record per line: hr_path[<TAB>lr_path]; all files must exist
DatasetManifest load_manifest(const std::string& path, int scale);
void save_manifest(const std::string& path, const DatasetManifest& m);

struct PatchPair {
    ImageBuffer lr;
    ImageBuffer hr;
};

// aligned random crop: hr origin = s * lr origin; when augmenting, the same
// dihedral element is applied to both
PatchPair sample_patch(const ImageBuffer& hr, const ImageBuffer& lr, int patch, int s, Rng& rng,
                       bool augment_enabled);

}  // namespace promptsr::data
