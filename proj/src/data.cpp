#include "promptsr/data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace promptsr::data {

namespace {

int read_ppm_token(std::istream& in) {
    // skips whitespace and '#' comments
    for (;;) {
        int ch = in.peek();
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(ch)) {
            in.get();
        } else {
            break;
        }
    }
    int v;
    if (!(in >> v)) throw FormatError("truncated PPM header");
    return v;
}

double cubic_kernel(double t) {
    constexpr double a = -0.5;
    t = std::fabs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

int clamp_idx(int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); }

struct TapSet {
    std::vector<int> idx;
    std::vector<double> w;
};

// contribution taps for one output coordinate along an axis of length n_in
TapSet make_taps(int out_pos, int n_in, int n_out) {
    const double ratio = double(n_in) / double(n_out);
    const double center = (out_pos + 0.5) * ratio - 0.5;
    const double support = ratio > 1.0 ? ratio : 1.0;  // widen when downscaling
    const int lo = int(std::ceil(center - 2.0 * support));
    const int hi = int(std::floor(center + 2.0 * support));
    TapSet t;
    double sum = 0;
    for (int i = lo; i <= hi; ++i) {
        const double w = cubic_kernel((i - center) / support);
        if (w == 0.0) continue;
        t.idx.push_back(clamp_idx(i, n_in));
        t.w.push_back(w);
        sum += w;
    }
    for (auto& w : t.w) w /= sum;
    return t;
}

}  // namespace

ImageBuffer read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image: " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '6') throw FormatError("not a binary PPM (P6): " + path);
    const int w = read_ppm_token(in);
    const int h = read_ppm_token(in);
    const int maxv = read_ppm_token(in);
    if (w <= 0 || h <= 0) throw FormatError("bad PPM dimensions in " + path);
    if (maxv != 255) throw FormatError("only 8-bit PPM supported: " + path);
    in.get();  // single whitespace after header
    ImageBuffer img = ImageBuffer::create(w, h);
    in.read(reinterpret_cast<char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
    if (in.gcount() != std::streamsize(img.pixels.size()))
        throw FormatError("truncated PPM payload in " + path);
    return img;
}

void write_ppm(const std::string& path, const ImageBuffer& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write image: " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              std::streamsize(img.pixels.size()));
    if (!out) throw DataError("failed writing image: " + path);
}

ImageBuffer bicubic_resize(const ImageBuffer& img, int out_w, int out_h) {
    if (out_w <= 0 || out_h <= 0) throw ContractError("bicubic_resize target size must be positive");
    if (img.width <= 0 || img.height <= 0) throw ContractError("bicubic_resize on empty image");

    std::vector<TapSet> xt(out_w), yt(out_h);
    for (int x = 0; x < out_w; ++x) xt[x] = make_taps(x, img.width, out_w);
    for (int y = 0; y < out_h; ++y) yt[y] = make_taps(y, img.height, out_h);

    // horizontal pass into a double buffer, then vertical
    std::vector<double> tmp(size_t(img.height) * out_w * 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < out_w; ++x) {
            const TapSet& t = xt[x];
            for (int c = 0; c < 3; ++c) {
                double acc = 0;
                for (size_t i = 0; i < t.idx.size(); ++i)
                    acc += t.w[i] * img.at(y, t.idx[i], c);
                tmp[(size_t(y) * out_w + x) * 3 + c] = acc;
            }
        }
    ImageBuffer out = ImageBuffer::create(out_w, out_h);
    for (int y = 0; y < out_h; ++y) {
        const TapSet& t = yt[y];
        for (int x = 0; x < out_w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0;
                for (size_t i = 0; i < t.idx.size(); ++i)
                    acc += t.w[i] * tmp[(size_t(t.idx[i]) * out_w + x) * 3 + c];
                long v = std::lround(acc);
                out.at(y, x, c) = uint8_t(v < 0 ? 0 : (v > 255 ? 255 : v));
            }
    }
    return out;
}

Tensor rgb_to_y(const ImageBuffer& img) {
    Tensor y(Shape{img.height, img.width});
    float* p = y.data();
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            p[size_t(r) * img.width + c] = float(
                16.0 + (65.738 * img.at(r, c, 0) + 129.057 * img.at(r, c, 1) +
                        25.064 * img.at(r, c, 2)) /
                           256.0);
    return y;
}

Tensor to_tensor(const ImageBuffer& img) {
    Tensor t(Shape{img.height, img.width, 3});
    float* p = t.data();
    for (size_t i = 0; i < img.pixels.size(); ++i) p[i] = img.pixels[i] / 255.0f;
    return t;
}

ImageBuffer from_tensor(const Tensor& t) {
    if (t.rank() != 3 || t.dim(2) != 3)
        throw ShapeError("image tensor must be [H,W,3], got " + shape_str(t.shape()));
    ImageBuffer img = ImageBuffer::create(t.dim(1), t.dim(0));
    const float* p = t.data();
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        double v = std::min(1.0, std::max(0.0, double(p[i]))) * 255.0;
        img.pixels[i] = uint8_t(std::lround(v));
    }
    return img;
}

ImageBuffer augment(const ImageBuffer& img, int aug_id) {
    if (aug_id < 0 || aug_id > 7) throw ContractError("augmentation id must be in [0,8)");
    const bool flip = aug_id & 4;
    const int rot = aug_id & 3;
    const int W = img.width, H = img.height;
    const bool swap = rot & 1;
    ImageBuffer out = ImageBuffer::create(swap ? H : W, swap ? W : H);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            // invert the output coordinate through rot90^rot then flip
            int sx = x, sy = y;
            switch (rot) {
                case 0: break;
                case 1:  // out(y,x) = in(x, H_out-1-y) with rotation by 90 deg
                    sx = y;
                    sy = out.width - 1 - x;
                    break;
                case 2:
                    sx = out.width - 1 - x;
                    sy = out.height - 1 - y;
                    break;
                case 3:
                    sx = out.height - 1 - y;
                    sy = x;
                    break;
            }
            if (flip) sx = W - 1 - sx;
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
        }
    return out;
}

int augment_inverse(int aug_id) {
    // horizontal flip composed after rotation; flips are involutions and
    // conjugate rotation to its inverse
    const bool flip = aug_id & 4;
    const int rot = aug_id & 3;
    return flip ? aug_id : ((4 - rot) & 3);
}

ImageBuffer crop(const ImageBuffer& img, int x0, int y0, int w, int h) {
    if (x0 < 0 || y0 < 0 || x0 + w > img.width || y0 + h > img.height)
        throw DataError("crop outside image bounds");
    ImageBuffer out = ImageBuffer::create(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
    return out;
}

DatasetManifest load_manifest(const std::string& path, int scale) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    DatasetManifest m;
    m.scale = scale;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ManifestRecord rec;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            rec.hr_path = line;
        } else {
            rec.hr_path = line.substr(0, tab);
            rec.lr_path = line.substr(tab + 1);
        }
        if (!std::filesystem::exists(rec.hr_path))
            throw DataError("manifest references missing file: " + rec.hr_path);
        if (rec.lr_path && !std::filesystem::exists(*rec.lr_path))
            throw DataError("manifest references missing file: " + *rec.lr_path);
        m.records.push_back(std::move(rec));
    }
    if (m.records.empty()) throw DataError("manifest is empty: " + path);
    return m;
}

void save_manifest(const std::string& path, const DatasetManifest& m) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest: " + path);
    for (const auto& r : m.records) {
        out << r.hr_path;
        if (r.lr_path) out << '\t' << *r.lr_path;
        out << '\n';
    }
}

PatchPair sample_patch(const ImageBuffer& hr, const ImageBuffer& lr, int patch, int s, Rng& rng,
                       bool augment_enabled) {
    if (lr.width < patch || lr.height < patch)
        throw DataError("image " + std::to_string(lr.width) + "x" + std::to_string(lr.height) +
                        " smaller than patch " + std::to_string(patch));
    if (hr.width != lr.width * s || hr.height != lr.height * s)
        throw DataError("LR/HR dimensions are not an exact x" + std::to_string(s) + " pair");
    const int x0 = int(rng.below(lr.width - patch + 1));
    const int y0 = int(rng.below(lr.height - patch + 1));
    const int aug = augment_enabled ? int(rng.below(8)) : 0;
    PatchPair p;
    p.lr = augment(crop(lr, x0, y0, patch, patch), aug);
    p.hr = augment(crop(hr, x0 * s, y0 * s, patch * s, patch * s), aug);
    return p;
}

}  // namespace promptsr::data
