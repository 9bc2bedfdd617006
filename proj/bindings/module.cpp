#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "promptsr/analyzer.hpp"
#include "promptsr/metrics.hpp"
#include "promptsr/serialize.hpp"
#include "promptsr/train.hpp"

namespace py = pybind11;
using namespace promptsr;

namespace {

data::ImageBuffer image_from_array(const py::array_t<uint8_t>& arr) {
    auto buf = arr.request();
    if (buf.ndim != 3 || buf.shape[2] != 3)
        throw py::value_error("expected an uint8 array of shape [H, W, 3]");
    data::ImageBuffer img = data::ImageBuffer::create(int(buf.shape[1]), int(buf.shape[0]));
    const auto r = arr.unchecked<3>();
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = r(y, x, c);
    return img;
}

py::array_t<uint8_t> image_to_array(const data::ImageBuffer& img) {
    py::array_t<uint8_t> arr({img.height, img.width, 3});
    auto w = arr.mutable_unchecked<3>();
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) w(y, x, c) = img.at(y, x, c);
    return arr;
}

ModelConfig config_from_kwargs(int scale, int channels, int heads, int window_size,
                               int sub_category_size, int downscale, float alpha, int num_rg,
                               int cpb_per_rg, int mlp_ratio) {
    ModelConfig cfg;
    cfg.scale = scale;
    cfg.channels = channels;
    cfg.heads = heads;
    cfg.window_size = window_size;
    cfg.sub_category_size = sub_category_size;
    cfg.downscale = downscale;
    cfg.alpha = alpha;
    cfg.num_rg = num_rg;
    cfg.cpb_per_rg = cpb_per_rg;
    cfg.mlp_ratio = mlp_ratio;
    cfg.validate();
    return cfg;
}

class Upscaler {
public:
    explicit Upscaler(const std::string& checkpoint)
        : model_(PromptSRModel::build(
              config::model_from(config::KeyValues::parse_file(checkpoint + ".cfg")), 0)) {
        auto ckpt = serialize::read_checkpoint(checkpoint);
        auto params = model_.parameters();
        serialize::apply_checkpoint(ckpt, params);
    }

    explicit Upscaler(const ModelConfig& cfg, uint64_t seed)
        : model_(PromptSRModel::build(cfg, seed)) {}

    py::array_t<uint8_t> run(const py::array_t<uint8_t>& arr) {
        auto img = image_from_array(arr);
        auto out = data::from_tensor(model_.forward(data::to_tensor(img)));
        return image_to_array(out);
    }

    int scale() const { return model_.config().scale; }
    int64_t param_count() { return model_.param_count(); }

private:
    PromptSRModel model_;
};

}  // namespace

PYBIND11_MODULE(_promptsr, m) {
    m.doc() = "anchor-prompted lightweight super-resolution core";
    m.attr("__version__") = "0.1.0";

    m.def(
        "bicubic_resize",
        [](const py::array_t<uint8_t>& img, int out_w, int out_h) {
            return image_to_array(data::bicubic_resize(image_from_array(img), out_w, out_h));
        },
        py::arg("image"), py::arg("out_w"), py::arg("out_h"));

    m.def(
        "psnr_y",
        [](const py::array_t<uint8_t>& a, const py::array_t<uint8_t>& b, int crop) {
            return metrics::psnr_y(image_from_array(a), image_from_array(b), crop);
        },
        py::arg("a"), py::arg("b"), py::arg("crop") = 0);

    m.def(
        "ssim_y",
        [](const py::array_t<uint8_t>& a, const py::array_t<uint8_t>& b, int crop) {
            return metrics::ssim_y(image_from_array(a), image_from_array(b), crop);
        },
        py::arg("a"), py::arg("b"), py::arg("crop") = 0);

    m.def(
        "count_params",
        [](int scale, int channels, int heads, int window_size, int sub_category_size,
           int downscale, float alpha, int num_rg, int cpb_per_rg, int mlp_ratio) {
            return analyzer::count_params(
                config_from_kwargs(scale, channels, heads, window_size, sub_category_size,
                                   downscale, alpha, num_rg, cpb_per_rg, mlp_ratio));
        },
        py::arg("scale") = 4, py::arg("channels") = 48, py::arg("heads") = 4,
        py::arg("window_size") = 16, py::arg("sub_category_size") = 128, py::arg("downscale") = 8,
        py::arg("alpha") = 0.01f, py::arg("num_rg") = 4, py::arg("cpb_per_rg") = 3,
        py::arg("mlp_ratio") = 1);

    m.def(
        "count_multi_adds",
        [](int hr_w, int hr_h, int scale, int channels, int heads, int window_size,
           int sub_category_size, int downscale, float alpha, int num_rg, int cpb_per_rg,
           int mlp_ratio) {
            return analyzer::count_multi_adds(
                config_from_kwargs(scale, channels, heads, window_size, sub_category_size,
                                   downscale, alpha, num_rg, cpb_per_rg, mlp_ratio),
                hr_w, hr_h);
        },
        py::arg("hr_w") = 1280, py::arg("hr_h") = 720, py::arg("scale") = 4,
        py::arg("channels") = 48, py::arg("heads") = 4, py::arg("window_size") = 16,
        py::arg("sub_category_size") = 128, py::arg("downscale") = 8, py::arg("alpha") = 0.01f,
        py::arg("num_rg") = 4, py::arg("cpb_per_rg") = 3, py::arg("mlp_ratio") = 1);

    py::class_<Upscaler>(m, "Upscaler")
        .def(py::init<const std::string&>(), py::arg("checkpoint"))
        .def_static(
            "from_config",
            [](int scale, int channels, int heads, int window_size, int sub_category_size,
               int downscale, float alpha, int num_rg, int cpb_per_rg, int mlp_ratio,
               uint64_t seed) {
                return Upscaler(config_from_kwargs(scale, channels, heads, window_size,
                                                   sub_category_size, downscale, alpha, num_rg,
                                                   cpb_per_rg, mlp_ratio),
                                seed);
            },
            py::arg("scale") = 2, py::arg("channels") = 24, py::arg("heads") = 4,
            py::arg("window_size") = 8, py::arg("sub_category_size") = 128,
            py::arg("downscale") = 8, py::arg("alpha") = 0.01f, py::arg("num_rg") = 1,
            py::arg("cpb_per_rg") = 1, py::arg("mlp_ratio") = 1, py::arg("seed") = 0)
        .def("run", &Upscaler::run, py::arg("image"))
        .def_property_readonly("scale", &Upscaler::scale)
        .def("param_count", &Upscaler::param_count);
}
