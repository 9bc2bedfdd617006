#include "promptsr/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "promptsr/analyzer.hpp"
#include "promptsr/metrics.hpp"
#include "promptsr/train.hpp"

namespace promptsr::cli {

namespace {

namespace fs = std::filesystem;

// model rebuilt from the checkpoint's config sidecar
PromptSRModel load_model(const std::string& ckpt_path) {
    auto kv = config::KeyValues::parse_file(ckpt_path + ".cfg");
    auto model = PromptSRModel::build(config::model_from(kv), 0);
    auto ckpt = serialize::read_checkpoint(ckpt_path);
    auto params = model.parameters();
    serialize::apply_checkpoint(ckpt, params);
    return model;
}

data::ImageBuffer upscale(PromptSRModel& model, const data::ImageBuffer& lr) {
    return data::from_tensor(model.forward(data::to_tensor(lr)));
}

int cmd_prepare(const std::string& manifest_path, int scale, const std::string& out_dir) {
    auto manifest = data::load_manifest(manifest_path, scale);
    fs::create_directories(out_dir);
    data::DatasetManifest paired;
    paired.scale = scale;
    int failures = 0;
    for (const auto& rec : manifest.records) {
        try {
            auto hr = data::read_ppm(rec.hr_path);
            hr = data::crop(hr, 0, 0, hr.width / scale * scale, hr.height / scale * scale);
            auto lr = data::bicubic_resize(hr, hr.width / scale, hr.height / scale);
            const std::string name = fs::path(rec.hr_path).stem().string() + "_x" +
                                     std::to_string(scale) + ".ppm";
            const std::string lr_path = (fs::path(out_dir) / name).string();
            data::write_ppm(lr_path, lr);
            paired.records.push_back({rec.hr_path, lr_path});
        } catch (const std::exception& e) {
            std::cerr << "prepare: " << rec.hr_path << ": " << e.what() << "\n";
            ++failures;
        }
    }
    data::save_manifest((fs::path(out_dir) / "manifest.txt").string(), paired);
    std::cout << "wrote " << paired.records.size() << " LR images to " << out_dir << "\n";
    return failures == 0 ? 0 : 1;
}

int cmd_train(const std::string& config_path, int seed_override, const std::string& out_override,
              const std::string& resume) {
    auto kv = config::KeyValues::parse_file(config_path);
    auto cfg = train::train_config_from(kv);
    if (seed_override >= 0) cfg.seed = uint64_t(seed_override);
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (!resume.empty()) cfg.resume_from = resume;
    if (cfg.out_dir.empty()) throw ConfigError("training needs an output directory (--out)");
    if (cfg.manifest_path.empty()) throw ConfigError("training config has no manifest");
    train::Trainer trainer(std::move(cfg));
    auto log = trainer.run();
    if (!log.empty())
        std::cout << "step " << log.back().step << " loss " << log.back().loss << "\n";
    return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& in_path, const std::string& out_path) {
    auto model = load_model(ckpt);
    auto lr = data::read_ppm(in_path);
    data::write_ppm(out_path, upscale(model, lr));
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& manifest_path,
             const std::string& out_csv) {
    auto model = load_model(ckpt);
    const int s = model.config().scale;
    auto manifest = data::load_manifest(manifest_path, s);
    metrics::EvalReport report;
    report.crop_border = s;
    for (const auto& rec : manifest.records) {
        auto hr = data::read_ppm(rec.hr_path);
        hr = data::crop(hr, 0, 0, hr.width / s * s, hr.height / s * s);
        data::ImageBuffer lr = rec.lr_path
                                   ? data::read_ppm(*rec.lr_path)
                                   : data::bicubic_resize(hr, hr.width / s, hr.height / s);
        auto sr = upscale(model, lr);
        metrics::EvalEntry e;
        e.image = fs::path(rec.hr_path).filename().string();
        e.psnr = metrics::psnr_y(sr, hr, s);
        e.ssim = metrics::ssim_y(sr, hr, s);
        report.entries.push_back(e);
    }
    const std::string csv = report.to_csv();
    if (!out_csv.empty()) {
        std::ofstream out(out_csv);
        out << csv;
    }
    std::cout << csv;
    return 0;
}

int cmd_analyze(const std::string& config_path, int scale_override, bool per_layer,
                bool probe, bool ablation, int hr_w, int hr_h, const std::string& out_csv) {
    ModelConfig cfg;
    if (!config_path.empty()) cfg = config::model_from(config::KeyValues::parse_file(config_path));
    if (scale_override > 0) cfg.scale = scale_override;
    cfg.validate();
    analyzer::CostOptions opt;
    opt.hr_w = hr_w;
    opt.hr_h = hr_h;
    auto ledger = analyzer::build_ledger(cfg, opt);
    std::cout << analyzer::convention_header();
    std::cout << "config: scale x" << cfg.scale << ", " << cfg.num_rg << " groups x "
              << cfg.cpb_per_rg << " blocks, C=" << cfg.channels << ", HR " << hr_w << "x" << hr_h
              << "\n\n";
    std::cout << ledger.to_table(per_layer);
    if (probe) std::cout << "\n" << analyzer::probe_report(cfg);
    if (ablation) std::cout << "\n" << analyzer::ablation_report(cfg, hr_w, hr_h);
    if (!out_csv.empty()) {
        std::ofstream out(out_csv);
        out << ledger.to_csv();
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"lightweight anchor-prompted super-resolution"};
    app.require_subcommand(1);

    int threads = 1;
    app.add_option("--threads", threads, "worker thread cap");

    auto* prepare = app.add_subcommand("prepare", "bicubic-downscale an HR set");
    std::string prep_manifest, prep_out;
    int prep_scale = 2;
    prepare->add_option("manifest", prep_manifest, "HR manifest, one path per line")->required();
    prepare->add_option("--scale", prep_scale, "downscale factor")->required();
    prepare->add_option("--out", prep_out, "output directory")->required();

    auto* tr = app.add_subcommand("train", "train from a config file");
    std::string train_cfg, train_out, train_resume;
    int train_seed = -1;
    tr->add_option("--config", train_cfg, "key=value config file")->required();
    tr->add_option("--seed", train_seed, "seed override");
    tr->add_option("--out", train_out, "output directory override");
    tr->add_option("--resume", train_resume, "checkpoint prefix to resume from");

    auto* inf = app.add_subcommand("infer", "upscale one image");
    std::string inf_ckpt, inf_in, inf_out;
    inf->add_option("--checkpoint", inf_ckpt, "checkpoint path")->required();
    inf->add_option("input", inf_in, "input PPM")->required();
    inf->add_option("output", inf_out, "output PPM")->required();

    auto* ev = app.add_subcommand("eval", "PSNR/SSIM over a manifest");
    std::string ev_ckpt, ev_manifest, ev_out;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
    ev->add_option("manifest", ev_manifest, "evaluation manifest")->required();
    ev->add_option("--out", ev_out, "CSV output path");

    auto* an = app.add_subcommand("analyze", "parameter and multiply-add accounting");
    std::string an_cfg, an_out;
    int an_scale = -1, an_w = 1280, an_h = 720;
    bool an_per_layer = false, an_probe = false, an_ablation = false;
    an->add_option("--config", an_cfg, "key=value config file");
    an->add_option("--scale", an_scale, "scale override");
    an->add_flag("--per-layer", an_per_layer, "expand the per-layer ledger");
    an->add_flag("--probe", an_probe, "attention scaling probe");
    an->add_flag("--ablation", an_ablation, "anchor downscale sweep");
    an->add_option("--hr-w", an_w, "HR width");
    an->add_option("--hr-h", an_h, "HR height");
    an->add_option("--out", an_out, "CSV ledger output path");

    try {
        app.parse(argc, argv);
        set_num_threads(threads);
        if (*prepare) return cmd_prepare(prep_manifest, prep_scale, prep_out);
        if (*tr) return cmd_train(train_cfg, train_seed, train_out, train_resume);
        if (*inf) return cmd_infer(inf_ckpt, inf_in, inf_out);
        if (*ev) return cmd_eval(ev_ckpt, ev_manifest, ev_out);
        if (*an)
            return cmd_analyze(an_cfg, an_scale, an_per_layer, an_probe, an_ablation, an_w, an_h,
                               an_out);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace promptsr::cli
