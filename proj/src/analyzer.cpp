#include "promptsr/analyzer.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace promptsr::analyzer {

namespace {

struct Dims {
    int64_t hw = 0;      // padded token count
    int64_t anchors = 0; // anchor token count
};

Dims feature_dims(const ModelConfig& cfg, const CostOptions& opt) {
    if (opt.hr_w % cfg.scale != 0 || opt.hr_h % cfg.scale != 0)
        throw ContractError("HR size " + std::to_string(opt.hr_w) + "x" +
                            std::to_string(opt.hr_h) + " not divisible by scale " +
                            std::to_string(cfg.scale));
    const int mult = cfg.pad_multiple();
    const int lw = opt.hr_w / cfg.scale, lh = opt.hr_h / cfg.scale;
    const int wp = (lw + mult - 1) / mult * mult;
    const int hp = (lh + mult - 1) / mult * mult;
    Dims d;
    d.hw = int64_t(wp) * hp;
    if (opt.anchors_fixed_grid) {
        const int g = opt.train_patch / cfg.downscale;
        d.anchors = int64_t(g) * g;
    } else {
        d.anchors = int64_t(wp / cfg.downscale) * (hp / cfg.downscale);
    }
    return d;
}

}  // namespace

int64_t OpCostLedger::total_params() const {
    int64_t n = 0;
    for (const auto& r : records) n += r.params;
    return n;
}

int64_t OpCostLedger::total_multi_adds() const {
    int64_t n = 0;
    for (const auto& r : records) n += r.multi_adds;
    return n;
}

std::string OpCostLedger::to_csv() const {
    std::ostringstream os;
    os << "layer,params,multi_adds\n";
    for (const auto& r : records) os << r.layer << "," << r.params << "," << r.multi_adds << "\n";
    os << "total," << total_params() << "," << total_multi_adds() << "\n";
    return os.str();
}

std::string OpCostLedger::to_table(bool per_layer) const {
    std::ostringstream os;
    size_t wname = 5;
    for (const auto& r : records) wname = std::max(wname, r.layer.size());
    if (per_layer) {
        os << std::left << std::setw(int(wname) + 2) << "layer" << std::right << std::setw(14)
           << "params" << std::setw(18) << "multi_adds" << "\n";
        for (const auto& r : records)
            os << std::left << std::setw(int(wname) + 2) << r.layer << std::right << std::setw(14)
               << r.params << std::setw(18) << r.multi_adds << "\n";
    }
    os << std::left << std::setw(int(wname) + 2) << "total" << std::right << std::setw(14)
       << total_params() << std::setw(18) << total_multi_adds() << "\n";
    return os.str();
}

std::string convention_header() {
    return
        "multiply-add convention: one fused multiply-accumulate per scalar product term\n"
        "  convolution: out_ch * H * W * in_ch * 9 on the padded feature map\n"
        "  linear projection: rows * in * out\n"
        "  attention: QK^T plus attn*V, i.e. 2 * Nq * Nk * C per application\n"
        "  category attention: per raster chunk of at most sub_size tokens, uniform\n"
        "  category sizes assumed unless a measured profile is supplied\n"
        "  excluded: softmax, layer norm, activations, bias adds, pooling, pixel shuffle\n";
}

std::vector<int> uniform_categories(int tokens, int categories) {
    std::vector<int> sizes(categories, tokens / categories);
    for (int i = 0; i < tokens % categories; ++i) ++sizes[i];
    return sizes;
}

int64_t csa_attention_cost(const std::vector<int>& category_sizes, int sub_size, int channels) {
    int64_t cost = 0;
    for (int n : category_sizes) {
        while (n > 0) {
            const int64_t chunk = std::min(n, sub_size);
            cost += 2 * chunk * chunk * channels;
            n -= int(chunk);
        }
    }
    return cost;
}

OpCostLedger build_ledger(const ModelConfig& cfg, const CostOptions& opt) {
    cfg.validate();
    const Dims dm = feature_dims(cfg, opt);
    const int64_t hw = dm.hw, m = dm.anchors;
    const int64_t c = cfg.channels, c2 = c * c, r = cfg.mlp_ratio;
    const int64_t w2 = int64_t(cfg.window_size) * cfg.window_size;
    const int64_t relpos_params =
        int64_t(2 * cfg.window_size - 1) * (2 * cfg.window_size - 1) * cfg.heads;
    const std::vector<int> uniform = uniform_categories(int(hw), int(m));
    size_t csa_site = 0;
    auto next_csa_cost = [&]() {
        const std::vector<int>& sizes =
            opt.csa_profiles && csa_site < opt.csa_profiles->size()
                ? (*opt.csa_profiles)[csa_site]
                : uniform;
        ++csa_site;
        return csa_attention_cost(sizes, cfg.sub_category_size, cfg.channels);
    };

    OpCostLedger led;
    auto rec = [&](const std::string& name, int64_t p, int64_t ma) {
        led.records.push_back({name, p, ma});
    };

    rec("encoder", 3 * c * 9 + c, 9 * 3 * c * hw);
    for (int g = 0; g < cfg.num_rg; ++g) {
        const std::string rg = "rg" + std::to_string(g);
        for (int b = 0; b < cfg.cpb_per_rg; ++b) {
            const std::string cpb = rg + ".cpb" + std::to_string(b);
            rec(cpb + ".gapl.wq", c2, hw * c2);
            rec(cpb + ".gapl.wk", c2, hw * c2);
            rec(cpb + ".gapl.wv", c2, hw * c2);
            rec(cpb + ".gapl.wa", c2, m * c2);
            rec(cpb + ".gapl.anchor_gen_attn", 0, 2 * m * hw * c);
            rec(cpb + ".gapl.wkp", c2, m * c2);
            rec(cpb + ".gapl.wvp", c2, m * c2);
            rec(cpb + ".gapl.anchor_prompt_attn", 0, 2 * hw * m * c);
            rec(cpb + ".gapl.norm", 2 * c, 0);
            rec(cpb + ".gapl.ffn", 2 * r * c2 + r * c + c, 2 * r * hw * c2);
            for (const char* ln : {".coarse", ".fine"}) {
                const std::string lpl = cpb + ln;
                rec(lpl + ".wq", c2, hw * c2);
                rec(lpl + ".wk", c2, hw * c2);
                rec(lpl + ".wv", c2, hw * c2);
                rec(lpl + ".wsa_attn", 0, 2 * hw * w2 * c);
                rec(lpl + ".relpos", relpos_params, 0);
                rec(lpl + ".csa_attn", 0, next_csa_cost());
                rec(lpl + ".proj", c2 + c, hw * c2);
                rec(lpl + ".norm", 2 * c, 0);
                rec(lpl + ".ffn", 2 * r * c2 + r * c + c, 2 * r * hw * c2);
            }
        }
        rec(rg + ".conv", c2 * 9 + c, 9 * c2 * hw);
    }
    rec("trunk", c2 * 9 + c, 9 * c2 * hw);
    const int64_t dec_out = 3 * int64_t(cfg.scale) * cfg.scale;
    rec("decoder", c * dec_out * 9 + dec_out, 9 * c * dec_out * hw);
    return led;
}

int64_t count_params(const ModelConfig& cfg) {
    return build_ledger(cfg, {}).total_params();
}

int64_t count_multi_adds(const ModelConfig& cfg, int hr_w, int hr_h) {
    CostOptions opt;
    opt.hr_w = hr_w;
    opt.hr_h = hr_h;
    return build_ledger(cfg, opt).total_multi_adds();
}

std::vector<ProbeRow> asymptotic_probe(Mechanism m, const std::vector<int>& sides,
                                       const ModelConfig& cfg) {
    if (sides.size() < 3) throw ContractError("asymptotic probe needs at least 3 sizes");
    for (size_t i = 1; i < sides.size(); ++i)
        if (sides[i] <= sides[i - 1]) throw ContractError("probe sizes must be increasing");
    const int64_t c = cfg.channels;
    const int64_t w2 = int64_t(cfg.window_size) * cfg.window_size;
    const int g = 64 / cfg.downscale;  // anchor grid of the 64x64 training patch
    const int64_t m_fixed = int64_t(g) * g;
    std::vector<ProbeRow> rows;
    for (int s : sides) {
        const int64_t hw = int64_t(s) * s;
        ProbeRow row;
        row.side = s;
        switch (m) {
            case Mechanism::kSA: row.count = 2 * hw * hw * c; break;
            case Mechanism::kWSA: row.count = 2 * hw * w2 * c; break;
            case Mechanism::kGAPL: row.count = 4 * hw * m_fixed * c; break;
        }
        rows.push_back(row);
    }
    return rows;
}

SlopeFit loglog_fit(const std::vector<ProbeRow>& rows) {
    const size_t n = rows.size();
    std::vector<double> xs(n), ys(n);
    for (size_t i = 0; i < n; ++i) {
        xs[i] = std::log(double(rows[i].side) * rows[i].side);  // log HW
        ys[i] = std::log(double(rows[i].count));
    }
    double mx = 0, my = 0;
    for (size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    SlopeFit f;
    f.slope = sxy / sxx;
    f.r2 = syy == 0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return f;
}

std::vector<AblationRow> ablation_sweep(ModelConfig cfg, const std::vector<int>& ds, int hr_w,
                                        int hr_h) {
    std::vector<AblationRow> rows;
    for (int d : ds) {
        AblationRow row;
        row.d = d;
        cfg.downscale = d;
        CostOptions fixed;
        fixed.hr_w = hr_w;
        fixed.hr_h = hr_h;
        fixed.anchors_fixed_grid = true;
        row.fixed_grid = build_ledger(cfg, fixed).total_multi_adds();
        CostOptions ratio;
        ratio.hr_w = hr_w;
        ratio.hr_h = hr_h;
        row.ratio_d = build_ledger(cfg, ratio).total_multi_adds();
        rows.push_back(row);
    }
    return rows;
}

std::string probe_report(const ModelConfig& cfg) {
    const std::vector<int> sides = {16, 32, 64, 128};
    std::ostringstream os;
    os << "attention-term multiply-adds vs feature size (window and anchor grid fixed)\n";
    os << std::left << std::setw(10) << "size" << std::right << std::setw(18) << "SA"
       << std::setw(18) << "WSA" << std::setw(18) << "GAPL" << "\n";
    auto sa = asymptotic_probe(Mechanism::kSA, sides, cfg);
    auto wsa = asymptotic_probe(Mechanism::kWSA, sides, cfg);
    auto gapl = asymptotic_probe(Mechanism::kGAPL, sides, cfg);
    for (size_t i = 0; i < sides.size(); ++i) {
        std::string sz = std::to_string(sides[i]) + "x" + std::to_string(sides[i]);
        os << std::left << std::setw(10) << sz << std::right << std::setw(18) << sa[i].count
           << std::setw(18) << wsa[i].count << std::setw(18) << gapl[i].count << "\n";
    }
    auto fsa = loglog_fit(sa), fwsa = loglog_fit(wsa), fgapl = loglog_fit(gapl);
    os << std::setprecision(4) << std::fixed;
    os << "log-log slope vs HW: SA " << fsa.slope << " (r2 " << fsa.r2 << "), WSA " << fwsa.slope
       << " (r2 " << fwsa.r2 << "), GAPL " << fgapl.slope << " (r2 " << fgapl.r2 << ")\n";
    return os.str();
}

std::string ablation_report(const ModelConfig& cfg, int hr_w, int hr_h) {
    auto rows = ablation_sweep(cfg, {2, 4, 8}, hr_w, hr_h);
    std::ostringstream os;
    os << "multiply-adds vs anchor downscale d at " << hr_w << "x" << hr_h << " HR\n";
    os << std::left << std::setw(6) << "d" << std::right << std::setw(20) << "fixed-anchor-grid"
       << std::setw(20) << "anchors=HW/d^2" << "\n";
    for (const auto& r : rows)
        os << std::left << std::setw(6) << r.d << std::right << std::setw(20) << r.fixed_grid
           << std::setw(20) << r.ratio_d << "\n";
    return os.str();
}

}  // namespace promptsr::analyzer
