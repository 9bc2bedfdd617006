#pragma once

// L1 training loop: Adam with step-halving schedule, deterministic patch
// sampling, checkpoint/resume with exact continuation.

#include "promptsr/config.hpp"
#include "promptsr/data.hpp"
#include "promptsr/serialize.hpp"

namespace promptsr::train {

struct AdamConfig {
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    // applies one update; grads are flat buffers aligned with params
    void step(nn::ParamRegistry& params, const std::vector<std::vector<float>>& grads, float lr);

    int64_t steps_taken() const { return t_; }
    void save(std::ostream& out) const;
    void load(std::istream& in);

private:
    AdamConfig cfg_;
    int64_t t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

// base lr halved at each milestone fraction of the total iteration count
struct LrSchedule {
    double base_lr = 5e-4;
    std::vector<double> milestone_fracs = {0.5, 0.8, 0.9, 0.95, 0.98};
    int total_iters = 0;

    double at(int step) const {  // step is 1-based
        double lr = base_lr;
        for (double f : milestone_fracs)
            if (step >= int(f * total_iters) && int(f * total_iters) > 0) lr *= 0.5;
        return lr;
    }
};

struct TrainConfig {
    ModelConfig model;
    std::string manifest_path;
    int iters = 200;
    int batch_size = 8;
    int patch_size = 64;
    double lr = 5e-4;
    std::vector<double> milestone_fracs = {0.5, 0.8, 0.9, 0.95, 0.98};
    uint64_t seed = 0;
    int ckpt_every = 100;
    bool augment = true;
    std::string out_dir;
    std::string resume_from;  // checkpoint prefix to continue from
};

TrainConfig train_config_from(const config::KeyValues& kv);
void train_config_to(const TrainConfig& cfg, config::KeyValues& kv);

struct StepResult {
    int step = 0;
    double lr = 0;
    double loss = 0;
};

class Trainer {
public:
    explicit Trainer(TrainConfig cfg);

    StepResult step();             // one optimizer update
    std::vector<StepResult> run(); // remaining steps, with checkpoints and log

    PromptSRModel& model() { return model_; }
    int current_step() const { return step_; }

    // writes <prefix>.ckpt, <prefix>.ckpt.cfg and <prefix>.train
    void save_checkpoint(const std::string& prefix);

private:
    void load_dataset();
    void resume(const std::string& prefix);

    TrainConfig cfg_;
    PromptSRModel model_;
    Adam adam_;
    LrSchedule sched_;
    Rng rng_;
    std::vector<data::PatchPair> images_;  // full LR/HR pairs, patches cut per step
    std::vector<int> order_;
    size_t order_pos_ = 0;
    int step_ = 0;
};

// loss log CSV: step,lr,loss
std::string loss_log_csv(const std::vector<StepResult>& log);

}  // namespace promptsr::train
