#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "promptsr/analyzer.hpp"
#include "promptsr/serialize.hpp"

using namespace promptsr;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.channels = 8;
    cfg.heads = 2;
    cfg.window_size = 4;
    cfg.downscale = 4;
    cfg.sub_category_size = 16;
    cfg.num_rg = 2;
    cfg.cpb_per_rg = 2;
    cfg.scale = 2;
    return cfg;
}

int64_t ledger_row(const analyzer::OpCostLedger& led, const std::string& name, bool params) {
    for (const auto& r : led.records)
        if (r.layer == name) return params ? r.params : r.multi_adds;
    FAIL("missing ledger row ", name);
    return -1;
}

}  // namespace

TEST_CASE("ledger rows reproduce the hand arithmetic") {
    ModelConfig cfg;  // defaults: C=48
    cfg.scale = 2;
    analyzer::CostOptions opt;
    opt.hr_w = 128;  // LR feature 64x64, no padding
    opt.hr_h = 128;
    auto led = analyzer::build_ledger(cfg, opt);

    // linear C->C with bias: 48*48 + 48
    CHECK(ledger_row(led, "rg0.cpb0.coarse.proj", true) == 2352);
    // conv 3->48 with bias: 3*48*9 + 48
    CHECK(ledger_row(led, "encoder", true) == 1344);
    // conv 48->48 on 64x64: 48*64*64*48*9
    CHECK(ledger_row(led, "rg0.conv", false) == 84934656);
    CHECK(ledger_row(led, "trunk", false) == 84934656);
}

TEST_CASE("single-head attention multiply-adds: QK^T plus attn*V") {
    Rng rng(1);
    auto q = Tensor::randn({4, 2}, rng);
    auto k = Tensor::randn({4, 2}, rng);
    auto v = Tensor::randn({4, 2}, rng);
    MacCounter::enable(true);
    MacCounter::reset();
    attn::multi_head_attend(q, k, v, 1);
    MacCounter::enable(false);
    CHECK(MacCounter::value() == 64);  // 4*4*2 twice, projections excluded
}

TEST_CASE("default x4 parameter count sits within 5% of 779k") {
    ModelConfig cfg;
    cfg.scale = 4;
    const int64_t params = analyzer::count_params(cfg);
    CHECK(params == 779328);
    CHECK(std::llabs(params - 779000) <= 779000 / 20);
    // ledger records sum to the total by definition; spot-check the identity
    auto led = analyzer::build_ledger(cfg, {});
    int64_t s = 0;
    for (const auto& r : led.records) s += r.params;
    CHECK(s == led.total_params());
}

TEST_CASE("static parameter count equals the scalars the checkpoint writes") {
    auto cfg = small_config();
    auto model = PromptSRModel::build(cfg, 7);
    CHECK(model.param_count() == analyzer::count_params(cfg));

    auto params = model.parameters();
    serialize::write_checkpoint("t_an.ckpt", params);
    auto ckpt = serialize::read_checkpoint("t_an.ckpt");
    int64_t scalars = 0;
    for (const auto& [name, t] : ckpt.records) scalars += t.numel();
    CHECK(scalars == analyzer::count_params(cfg));
    std::remove("t_an.ckpt");

    // also for the full-size config
    ModelConfig full;
    full.scale = 4;
    auto big = PromptSRModel::build(full, 0);
    CHECK(big.param_count() == 779328);
}

TEST_CASE("static multiply-adds equal an instrumented forward pass exactly") {
    auto cfg = small_config();
    auto model = PromptSRModel::build(cfg, 3);
    const int lr_side = 8;  // pads to 8 (multiple of lcm(4,4))
    Rng rng(4);
    auto img = Tensor::rand_uniform({lr_side, lr_side, 3}, rng);

    // measured category profiles, in ledger order (coarse then fine per block)
    std::vector<AnchorPromptState> states;
    model.forward(img, &states);
    std::vector<std::vector<int>> profiles;
    for (const auto& st : states) {
        for (auto orient : {attn::Orientation::kCoarse, attn::Orientation::kFine}) {
            auto assign = attn::categorize(
                orient == attn::Orientation::kCoarse ? st.coarse_map : st.fine_map, orient);
            std::vector<int> sizes;
            for (const auto& m : assign.members) sizes.push_back(int(m.size()));
            profiles.push_back(std::move(sizes));
        }
    }

    MacCounter::enable(true);
    MacCounter::reset();
    model.forward(img);
    const uint64_t dynamic = MacCounter::value();
    MacCounter::enable(false);

    analyzer::CostOptions opt;
    opt.hr_w = lr_side * cfg.scale;
    opt.hr_h = lr_side * cfg.scale;
    opt.csa_profiles = &profiles;
    const int64_t stat = analyzer::build_ledger(cfg, opt).total_multi_adds();
    CHECK(stat == int64_t(dynamic));
}

TEST_CASE("multiply-adds grow monotonically in size and depth") {
    auto cfg = small_config();
    const int64_t base = analyzer::count_multi_adds(cfg, 64, 64);
    CHECK(analyzer::count_multi_adds(cfg, 128, 64) > base);
    CHECK(analyzer::count_multi_adds(cfg, 64, 128) > base);
    auto deeper = cfg;
    deeper.cpb_per_rg += 1;
    CHECK(analyzer::count_multi_adds(deeper, 64, 64) > base);
    auto wider = cfg;
    wider.channels *= 2;
    CHECK(analyzer::count_multi_adds(wider, 64, 64) > base);
    auto more_groups = cfg;
    more_groups.num_rg += 1;
    CHECK(analyzer::count_multi_adds(more_groups, 64, 64) > base);
}

TEST_CASE("probe: quadratic self-attention, linear windowed and anchored terms") {
    ModelConfig cfg;
    const std::vector<int> sides = {16, 32, 64, 128};
    auto sa = analyzer::asymptotic_probe(analyzer::Mechanism::kSA, sides, cfg);
    auto wsa = analyzer::asymptotic_probe(analyzer::Mechanism::kWSA, sides, cfg);
    auto gapl = analyzer::asymptotic_probe(analyzer::Mechanism::kGAPL, sides, cfg);

    auto fsa = analyzer::loglog_fit(sa);
    CHECK(fsa.slope == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(fsa.r2 >= 0.999);
    CHECK(analyzer::loglog_fit(wsa).slope == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(analyzer::loglog_fit(gapl).slope == doctest::Approx(1.0).epsilon(1e-9));

    // doubling H and W multiplies the SA term by 16 and the GAPL term by 4
    CHECK(sa[1].count == 16 * sa[0].count);
    CHECK(gapl[1].count == 4 * gapl[0].count);

    CHECK_THROWS_AS(analyzer::asymptotic_probe(analyzer::Mechanism::kSA, {16, 32}, cfg),
                    ContractError);
    CHECK_THROWS_AS(analyzer::asymptotic_probe(analyzer::Mechanism::kSA, {16, 32, 24}, cfg),
                    ContractError);
}

TEST_CASE("probe counts equal instrumented attention-term tallies") {
    ModelConfig cfg;  // C=48, heads 4, window 16, d=8
    const std::vector<int> sides = {16, 32, 64};
    auto sa = analyzer::asymptotic_probe(analyzer::Mechanism::kSA, sides, cfg);
    auto wsa = analyzer::asymptotic_probe(analyzer::Mechanism::kWSA, sides, cfg);
    auto gapl = analyzer::asymptotic_probe(analyzer::Mechanism::kGAPL, sides, cfg);
    Rng rng(5);
    for (size_t i = 0; i < sides.size(); ++i) {
        const int side = sides[i];
        const int hw = side * side;
        auto q = Tensor::randn({hw, cfg.channels}, rng);
        auto k = Tensor::randn({hw, cfg.channels}, rng);
        auto v = Tensor::randn({hw, cfg.channels}, rng);

        MacCounter::enable(true);
        MacCounter::reset();
        attn::multi_head_attend(q, k, v, cfg.heads);
        CHECK(int64_t(MacCounter::value()) == sa[i].count);

        MacCounter::reset();
        auto qm = reshape(q, {side, side, cfg.channels});
        auto km = reshape(k, {side, side, cfg.channels});
        auto vm = reshape(v, {side, side, cfg.channels});
        attn::wsa_attend(qm, km, vm, cfg.window_size, cfg.heads);
        CHECK(int64_t(MacCounter::value()) == wsa[i].count);

        // two anchor cross-attentions against a fixed 8x8 anchor grid
        auto anchors = Tensor::randn({64, cfg.channels}, rng);
        MacCounter::reset();
        attn::multi_head_attend(anchors, k, v, cfg.heads);
        attn::multi_head_attend(q, anchors, anchors, cfg.heads);
        CHECK(int64_t(MacCounter::value()) == gapl[i].count);
        MacCounter::enable(false);
    }
}

TEST_CASE("downscale sweep decreases with d in both accountings") {
    ModelConfig cfg;
    cfg.cpb_per_rg = 2;
    cfg.scale = 4;
    auto rows = analyzer::ablation_sweep(cfg, {2, 4, 8}, 1280, 720);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].fixed_grid > rows[1].fixed_grid);
    CHECK(rows[1].fixed_grid > rows[2].fixed_grid);
    CHECK(rows[0].ratio_d > rows[1].ratio_d);
    CHECK(rows[1].ratio_d > rows[2].ratio_d);
}

TEST_CASE("csa cost model: chunking arithmetic") {
    // one category of 5, one of 130 (128 + 2), one singleton, C=8
    const int64_t want = 2 * 8 * (5 * 5 + 128 * 128 + 2 * 2 + 1 * 1);
    CHECK(analyzer::csa_attention_cost({5, 130, 1}, 128, 8) == want);
    auto u = analyzer::uniform_categories(10, 4);
    CHECK(u == std::vector<int>{3, 3, 2, 2});
}

TEST_CASE("csv report carries per-layer rows and exact totals") {
    auto cfg = small_config();
    auto led = analyzer::build_ledger(cfg, {});
    auto csv = led.to_csv();
    CHECK(csv.find("layer,params,multi_adds\n") == 0);
    CHECK(csv.find("total," + std::to_string(led.total_params()) + "," +
                   std::to_string(led.total_multi_adds())) != std::string::npos);
    CHECK(analyzer::convention_header().find("multiply-accumulate") != std::string::npos);
}
