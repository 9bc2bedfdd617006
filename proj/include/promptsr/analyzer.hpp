#pragma once

// Static complexity accounting: exact per-layer parameter and multiply-add
// counts for a config and output resolution, plus the attention-mechanism
// scaling probe and the downscale-ratio sweep.

#include "promptsr/model.hpp"

namespace promptsr::analyzer {

struct LedgerRecord {
    std::string layer;
    int64_t params = 0;
    int64_t multi_adds = 0;
};

struct OpCostLedger {
    std::vector<LedgerRecord> records;

    int64_t total_params() const;
    int64_t total_multi_adds() const;
    std::string to_csv() const;
    std::string to_table(bool per_layer) const;
};

struct CostOptions {
    int hr_w = 1280;
    int hr_h = 720;
    // Anchor count normally tracks the feature size (HW/d^2). The fixed-grid
    // variant pins it to the training-patch grid (train_patch/d)^2, the
    // accounting the complexity-table formulation implies.
    bool anchors_fixed_grid = false;
    int train_patch = 64;
    // measured category sizes per category-attention site, consumed in ledger
    // order (groups outermost, coarse before fine); uniform when absent
    const std::vector<std::vector<int>>* csa_profiles = nullptr;
};

// The counting convention, printed at the top of every report.
std::string convention_header();

OpCostLedger build_ledger(const ModelConfig& cfg, const CostOptions& opt = {});
int64_t count_params(const ModelConfig& cfg);
int64_t count_multi_adds(const ModelConfig& cfg, int hr_w = 1280, int hr_h = 720);

// uniform split of `tokens` into `categories` bins (first bins take the
// remainder), matching how the static ledger models categorization
std::vector<int> uniform_categories(int tokens, int categories);
// 2 * C * sum(chunk^2) over raster chunks of at most sub_size
int64_t csa_attention_cost(const std::vector<int>& category_sizes, int sub_size, int channels);

// -----------------------------------------------------------------------
// attention-term scaling probe
// -----------------------------------------------------------------------

enum class Mechanism { kSA, kWSA, kGAPL };

struct ProbeRow {
    int side = 0;  // feature map is side x side
    int64_t count = 0;
};

// attention-term multiply-adds per feature size; window / anchor grid held
// fixed. Needs at least 3 strictly increasing sizes.
std::vector<ProbeRow> asymptotic_probe(Mechanism m, const std::vector<int>& sides,
                                       const ModelConfig& cfg);

struct SlopeFit {
    double slope = 0;
    double r2 = 0;
};
SlopeFit loglog_fit(const std::vector<ProbeRow>& rows);

// -----------------------------------------------------------------------
// downscale-ratio sweep
// -----------------------------------------------------------------------

struct AblationRow {
    int d = 0;
    int64_t fixed_grid = 0;  // anchors pinned to the training grid
    int64_t ratio_d = 0;     // anchors = HW/d^2 at the evaluation size
};

std::vector<AblationRow> ablation_sweep(ModelConfig cfg, const std::vector<int>& ds, int hr_w,
                                        int hr_h);

std::string probe_report(const ModelConfig& cfg);
std::string ablation_report(const ModelConfig& cfg, int hr_w, int hr_h);

}  // namespace promptsr::analyzer
