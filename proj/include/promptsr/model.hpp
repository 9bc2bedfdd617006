#pragma once

// The super-resolution network: shallow conv encoder, residual groups of
// cascade prompting blocks (one global anchor prompting layer + two local
// prompting layers each), trunk conv, and a pixel-shuffle decoder with a
// global residual from the encoder features.

#include <numeric>
#include <optional>

#include "promptsr/attention.hpp"

namespace promptsr {

struct ModelConfig {
    int channels = 48;
    int heads = 4;
    int mlp_ratio = 1;
    int window_size = 16;
    int sub_category_size = 128;
    int downscale = 8;
    float alpha = 0.01f;
    int num_rg = 4;      // residual groups
    int cpb_per_rg = 3;  // cascade prompting blocks per group
    int scale = 4;

    void validate() const {
        if (channels <= 0 || heads <= 0 || channels % heads != 0)
            throw ConfigError("channels must be a positive multiple of heads");
        if (downscale < 1) throw ConfigError("downscale must be >= 1");
        if (alpha < 0.0f || alpha >= 1.0f) throw ConfigError("alpha must be in [0, 1)");
        if (scale < 2 || scale > 4) throw ConfigError("scale must be 2, 3 or 4");
        if (window_size <= 0) throw ConfigError("window size must be positive");
        if (sub_category_size <= 0) throw ConfigError("sub-category size must be positive");
        if (num_rg < 1 || cpb_per_rg < 1) throw ConfigError("need at least one group and block");
        if (mlp_ratio < 1) throw ConfigError("mlp ratio must be >= 1");
    }

    // spatial granularity every feature map is padded to
    int pad_multiple() const { return std::lcm(window_size, downscale); }
};

// Anchor prompts carried between blocks of one residual group, plus the
// similarity maps the local layers reuse.
template <typename S>
struct AnchorPromptStateT {
    TensorT<S> prompts;     // [M, C]
    TensorT<S> coarse_map;  // [M, HW], head-averaged pre-softmax logits
    TensorT<S> fine_map;    // [HW, M]
    int rg_index = -1;
    int cpb_index = -1;
};
using AnchorPromptState = AnchorPromptStateT<float>;

// ---------------------------------------------------------------------------
// Global anchor prompting layer
// ---------------------------------------------------------------------------

template <typename S>
struct GAPLT {
    nn::LinearT<S> wq, wk, wv, wa, wkp, wvp;  // all C x C, no bias
    nn::LayerNormT<S> norm;
    nn::FFNT<S> ffn;
    int heads = 4;
    int downscale = 8;
    S alpha = S(0.01);

    static GAPLT make(const ModelConfig& cfg, Rng& rng) {
        GAPLT g;
        const int c = cfg.channels;
        g.wq = nn::LinearT<S>::make(c, c, false, rng);
        g.wk = nn::LinearT<S>::make(c, c, false, rng);
        g.wv = nn::LinearT<S>::make(c, c, false, rng);
        g.wa = nn::LinearT<S>::make(c, c, false, rng);
        g.wkp = nn::LinearT<S>::make(c, c, false, rng);
        g.wvp = nn::LinearT<S>::make(c, c, false, rng);
        g.norm = nn::LayerNormT<S>::make(c);
        g.ffn = nn::FFNT<S>::make(c, cfg.mlp_ratio, rng);
        g.heads = cfg.heads;
        g.downscale = cfg.downscale;
        g.alpha = static_cast<S>(cfg.alpha);
        return g;
    }

    std::pair<TensorT<S>, AnchorPromptStateT<S>> forward(
        const TensorT<S>& x, const AnchorPromptStateT<S>* prev) const {
        const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
        if (H < downscale || W < downscale)
            throw ContractError("feature map smaller than the anchor downscale factor");
        const int hw = H * W;
        auto xt = reshape(x, Shape{hw, C});

        auto q = wq.forward(xt);
        auto k = wk.forward(xt);
        auto v = wv.forward(xt);
        auto anchors = wa.forward(reshape(nn::avg_pool_down(x, downscale),
                                          Shape{(H / downscale) * (W / downscale), C}));

        // anchor prompt generation: anchors query the whole token space
        auto gen = attn::multi_head_attend(anchors, k, v, heads, {}, true);
        auto prompts = gen.out;
        if (prev != nullptr) {
            if (prev->prompts.shape() != prompts.shape())
                throw ContractError("anchor prompt shape changed inside a residual group: " +
                                    shape_str(prev->prompts.shape()) + " vs " +
                                    shape_str(prompts.shape()));
            prompts = add(scale(prev->prompts, alpha), scale(prompts, S(1) - alpha));
        }

        // anchor prompting: every token queries the (updated) prompts
        auto kp = wkp.forward(prompts);
        auto vp = wvp.forward(prompts);
        auto pr = attn::multi_head_attend(q, add(kp, anchors), vp, heads, {}, true);

        auto xp = add(pr.out, xt);
        xp = add(ffn.forward(norm.forward(xp)), xp);

        AnchorPromptStateT<S> st;
        st.prompts = prompts;
        st.coarse_map = gen.mean_logits;
        st.fine_map = pr.mean_logits;
        return {reshape(xp, Shape{H, W, C}), st};
    }

    void register_params(nn::ParamRegistryT<S>& reg, const std::string& p) {
        wq.register_params(reg, p + ".wq");
        wk.register_params(reg, p + ".wk");
        wv.register_params(reg, p + ".wv");
        wa.register_params(reg, p + ".wa");
        wkp.register_params(reg, p + ".wkp");
        wvp.register_params(reg, p + ".wvp");
        norm.register_params(reg, p + ".norm");
        ffn.register_params(reg, p + ".ffn");
    }
};

// ---------------------------------------------------------------------------
// Local prompting layer: window attention and category attention over one
// shared q/k/v, combined through a single output projection.
// ---------------------------------------------------------------------------

template <typename S>
struct LPLT {
    nn::LinearT<S> wq, wk, wv;  // no bias, shared by both branches
    nn::LinearT<S> proj;        // with bias
    nn::RelPosBiasT<S> relpos;
    nn::LayerNormT<S> norm;
    nn::FFNT<S> ffn;
    int heads = 4;
    int window = 16;
    int sub_size = 128;

    static LPLT make(const ModelConfig& cfg, Rng& rng) {
        LPLT l;
        const int c = cfg.channels;
        l.wq = nn::LinearT<S>::make(c, c, false, rng);
        l.wk = nn::LinearT<S>::make(c, c, false, rng);
        l.wv = nn::LinearT<S>::make(c, c, false, rng);
        l.proj = nn::LinearT<S>::make(c, c, true, rng);
        l.relpos = nn::RelPosBiasT<S>::make(cfg.window_size, cfg.heads, rng);
        l.norm = nn::LayerNormT<S>::make(c);
        l.ffn = nn::FFNT<S>::make(c, cfg.mlp_ratio, rng);
        l.heads = cfg.heads;
        l.window = cfg.window_size;
        l.sub_size = cfg.sub_category_size;
        return l;
    }

    TensorT<S> forward(const TensorT<S>& x, const TensorT<S>& sim_map,
                       attn::Orientation orient) const {
        const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
        const int hw = H * W;
        const int map_tokens =
            orient == attn::Orientation::kCoarse ? sim_map.dim(1) : sim_map.dim(0);
        if (map_tokens != hw)
            throw ContractError("similarity map covers " + std::to_string(map_tokens) +
                                " tokens, feature has " + std::to_string(hw));
        auto xt = reshape(x, Shape{hw, C});
        auto q = wq.forward(xt);
        auto k = wk.forward(xt);
        auto v = wv.forward(xt);

        auto as_map = [&](const TensorT<S>& t) { return reshape(t, Shape{H, W, C}); };
        auto wsa = attn::wsa_attend(as_map(q), as_map(k), as_map(v), window, heads,
                                    relpos.forward());
        auto csa = attn::csa_attend(q, k, v, attn::categorize(sim_map, orient), sub_size, heads);

        auto out = add(proj.forward(add(reshape(wsa, Shape{hw, C}), csa)), xt);
        out = add(ffn.forward(norm.forward(out)), out);
        return reshape(out, Shape{H, W, C});
    }

    void register_params(nn::ParamRegistryT<S>& reg, const std::string& p) {
        wq.register_params(reg, p + ".wq");
        wk.register_params(reg, p + ".wk");
        wv.register_params(reg, p + ".wv");
        proj.register_params(reg, p + ".proj");
        relpos.register_params(reg, p + ".relpos");
        norm.register_params(reg, p + ".norm");
        ffn.register_params(reg, p + ".ffn");
    }
};

// ---------------------------------------------------------------------------
// Cascade prompting block and residual group
// ---------------------------------------------------------------------------

template <typename S>
struct CPBT {
    GAPLT<S> gapl;
    LPLT<S> coarse;
    LPLT<S> fine;

    static CPBT make(const ModelConfig& cfg, Rng& rng) {
        CPBT b;
        b.gapl = GAPLT<S>::make(cfg, rng);
        b.coarse = LPLT<S>::make(cfg, rng);
        b.fine = LPLT<S>::make(cfg, rng);
        return b;
    }

    std::pair<TensorT<S>, AnchorPromptStateT<S>> forward(
        const TensorT<S>& x, const AnchorPromptStateT<S>* prev) const {
        auto [xp, st] = gapl.forward(x, prev);
        auto xc = coarse.forward(xp, st.coarse_map, attn::Orientation::kCoarse);
        auto xf = fine.forward(xc, st.fine_map, attn::Orientation::kFine);
        return {xf, st};
    }

    void register_params(nn::ParamRegistryT<S>& reg, const std::string& p) {
        gapl.register_params(reg, p + ".gapl");
        coarse.register_params(reg, p + ".coarse");
        fine.register_params(reg, p + ".fine");
    }
};

template <typename S>
struct ResidualGroupT {
    std::vector<CPBT<S>> blocks;
    nn::Conv3x3T<S> conv;

    static ResidualGroupT make(const ModelConfig& cfg, Rng& rng) {
        ResidualGroupT rg;
        for (int i = 0; i < cfg.cpb_per_rg; ++i) rg.blocks.push_back(CPBT<S>::make(cfg, rng));
        rg.conv = nn::Conv3x3T<S>::make(cfg.channels, cfg.channels, rng);
        return rg;
    }

    // Prompts never cross group boundaries: the first block always starts
    // from scratch.
    TensorT<S> forward(const TensorT<S>& x, int rg_index,
                       std::vector<AnchorPromptStateT<S>>* collect = nullptr) const {
        TensorT<S> h = x;
        AnchorPromptStateT<S> st;
        const AnchorPromptStateT<S>* prev = nullptr;
        for (size_t i = 0; i < blocks.size(); ++i) {
            auto [y, s] = blocks[i].forward(h, prev);
            h = y;
            st = std::move(s);
            st.rg_index = rg_index;
            st.cpb_index = static_cast<int>(i);
            if (collect) collect->push_back(st);
            prev = &st;
        }
        return add(conv.forward(h), x);
    }

    void register_params(nn::ParamRegistryT<S>& reg, const std::string& p) {
        for (size_t i = 0; i < blocks.size(); ++i)
            blocks[i].register_params(reg, p + ".cpb" + std::to_string(i));
        conv.register_params(reg, p + ".conv");
    }
};

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

template <typename S>
class PromptSRModelT {
public:
    static PromptSRModelT build(const ModelConfig& cfg, uint64_t seed) {
        cfg.validate();
        PromptSRModelT m;
        m.cfg_ = cfg;
        Rng rng(seed);
        m.encoder_ = nn::Conv3x3T<S>::make(3, cfg.channels, rng);
        for (int i = 0; i < cfg.num_rg; ++i) m.rgs_.push_back(ResidualGroupT<S>::make(cfg, rng));
        m.trunk_ = nn::Conv3x3T<S>::make(cfg.channels, cfg.channels, rng);
        m.decoder_ = nn::Conv3x3T<S>::make(cfg.channels, 3 * cfg.scale * cfg.scale, rng);
        return m;
    }

    const ModelConfig& config() const { return cfg_; }

    // [H, W, 3] in [0,1] -> [sH, sW, 3], unclamped
    TensorT<S> forward(const TensorT<S>& img,
                       std::vector<AnchorPromptStateT<S>>* collect = nullptr) const {
        if (!img.defined() || img.rank() != 3 || img.dim(2) != 3)
            throw ContractError("model input must be [H,W,3]");
        const int H = img.dim(0), W = img.dim(1);
        if (H < 1 || W < 1) throw ContractError("empty image");
        const int mult = cfg_.pad_multiple();
        const int Hp = (H + mult - 1) / mult * mult;
        const int Wp = (W + mult - 1) / mult * mult;
        auto x = nn::pad_reflect_br(img, Hp, Wp);
        auto x0 = encoder_.forward(x);
        auto h = x0;
        for (size_t i = 0; i < rgs_.size(); ++i)
            h = rgs_[i].forward(h, static_cast<int>(i), collect);
        auto xdf = trunk_.forward(h);
        auto dec = nn::pixel_shuffle(decoder_.forward(add(xdf, x0)), cfg_.scale);
        return nn::crop_tl(dec, H * cfg_.scale, W * cfg_.scale);
    }

    // Name -> tensor map in fixed construction order. Rebuilt per call so the
    // pointers always refer to the current member tensors.
    nn::ParamRegistryT<S> parameters() {
        nn::ParamRegistryT<S> reg;
        encoder_.register_params(reg, "encoder");
        for (size_t i = 0; i < rgs_.size(); ++i)
            rgs_[i].register_params(reg, "rg" + std::to_string(i));
        trunk_.register_params(reg, "trunk");
        decoder_.register_params(reg, "decoder");
        return reg;
    }

    int64_t param_count() {
        int64_t n = 0;
        for (const auto& p : parameters()) n += p.tensor->numel();
        return n;
    }

private:
    ModelConfig cfg_;
    nn::Conv3x3T<S> encoder_, trunk_, decoder_;
    std::vector<ResidualGroupT<S>> rgs_;
};

using PromptSRModel = PromptSRModelT<float>;

// mean absolute error
template <typename S>
TensorT<S> l1_loss(const TensorT<S>& pred, const TensorT<S>& target) {
    if (pred.shape() != target.shape())
        throw DataError("loss operands differ: " + shape_str(pred.shape()) + " vs " +
                        shape_str(target.shape()));
    return mean(abs(sub(pred, target)));
}

}  // namespace promptsr
