#include "promptsr/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace promptsr::train {

void Adam::step(nn::ParamRegistry& params, const std::vector<std::vector<float>>& grads,
                float lr) {
    if (grads.size() != params.size()) throw ContractError("gradient/parameter count mismatch");
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i].tensor->numel(), 0.0f);
            v_[i].assign(params[i].tensor->numel(), 0.0f);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(double(cfg_.beta1), double(t_));
    const double bc2 = 1.0 - std::pow(double(cfg_.beta2), double(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i].tensor;
        const auto& g = grads[i];
        if (int64_t(g.size()) != p.numel())
            throw ContractError("gradient size mismatch at " + params[i].name);
        Tensor next(p.shape());
        for (int64_t j = 0; j < p.numel(); ++j) {
            m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0f - cfg_.beta1) * g[j];
            v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0f - cfg_.beta2) * g[j] * g[j];
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_[i][j] / bc2;
            next.data()[j] =
                float(p.data()[j] - lr * mhat / (std::sqrt(vhat) + double(cfg_.eps)));
        }
        p = next;  // params are values; the old buffer may be shared by a tape
    }
}

void Adam::save(std::ostream& out) const {
    out << t_ << "\n" << m_.size() << "\n";
    out.precision(12);
    for (size_t i = 0; i < m_.size(); ++i) {
        out << m_[i].size() << "\n";
        for (size_t j = 0; j < m_[i].size(); ++j) out << m_[i][j] << " " << v_[i][j] << "\n";
    }
}

void Adam::load(std::istream& in) {
    size_t n = 0;
    if (!(in >> t_ >> n)) throw FormatError("corrupt optimizer state");
    m_.resize(n);
    v_.resize(n);
    for (size_t i = 0; i < n; ++i) {
        size_t len = 0;
        if (!(in >> len)) throw FormatError("corrupt optimizer state");
        m_[i].resize(len);
        v_[i].resize(len);
        for (size_t j = 0; j < len; ++j)
            if (!(in >> m_[i][j] >> v_[i][j])) throw FormatError("corrupt optimizer state");
    }
}

TrainConfig train_config_from(const config::KeyValues& kv) {
    TrainConfig c;
    c.model = config::model_from(kv);
    c.manifest_path = kv.get("manifest", "");
    c.iters = kv.geti("iters", c.iters);
    c.batch_size = kv.geti("batch_size", c.batch_size);
    c.patch_size = kv.geti("patch_size", c.patch_size);
    c.lr = kv.getd("lr", c.lr);
    c.seed = uint64_t(kv.geti("seed", 0));
    c.ckpt_every = kv.geti("ckpt_every", c.ckpt_every);
    c.augment = kv.geti("augment", 1) != 0;
    c.out_dir = kv.get("out_dir", "");
    if (kv.has("milestones")) {
        c.milestone_fracs.clear();
        std::istringstream is(kv.get("milestones", ""));
        std::string tok;
        while (std::getline(is, tok, ',')) c.milestone_fracs.push_back(std::stod(tok));
    }
    return c;
}

void train_config_to(const TrainConfig& cfg, config::KeyValues& kv) {
    config::model_to(cfg.model, kv);
    kv.set("manifest", cfg.manifest_path);
    kv.seti("iters", cfg.iters);
    kv.seti("batch_size", cfg.batch_size);
    kv.seti("patch_size", cfg.patch_size);
    kv.setd("lr", cfg.lr);
    kv.seti("seed", int64_t(cfg.seed));
    kv.seti("ckpt_every", cfg.ckpt_every);
    kv.seti("augment", cfg.augment ? 1 : 0);
    kv.set("out_dir", cfg.out_dir);
    std::ostringstream ms;
    for (size_t i = 0; i < cfg.milestone_fracs.size(); ++i)
        ms << (i ? "," : "") << cfg.milestone_fracs[i];
    kv.set("milestones", ms.str());
}

Trainer::Trainer(TrainConfig cfg)
    : cfg_(std::move(cfg)),
      model_(PromptSRModel::build(cfg_.model, cfg_.seed)),
      rng_(Rng::for_worker(cfg_.seed, 1)) {
    sched_.base_lr = cfg_.lr;
    sched_.milestone_fracs = cfg_.milestone_fracs;
    sched_.total_iters = cfg_.iters;
    load_dataset();
    if (!cfg_.resume_from.empty()) resume(cfg_.resume_from);
}

void Trainer::load_dataset() {
    auto manifest = data::load_manifest(cfg_.manifest_path, cfg_.model.scale);
    const int s = cfg_.model.scale;
    for (const auto& rec : manifest.records) {
        data::PatchPair pair;
        pair.hr = data::read_ppm(rec.hr_path);
        // HR pre-cropped to a multiple of the scale
        pair.hr = data::crop(pair.hr, 0, 0, pair.hr.width / s * s, pair.hr.height / s * s);
        if (rec.lr_path)
            pair.lr = data::read_ppm(*rec.lr_path);
        else
            pair.lr = data::bicubic_resize(pair.hr, pair.hr.width / s, pair.hr.height / s);
        images_.push_back(std::move(pair));
    }
}

StepResult Trainer::step() {
    const int n = int(images_.size());
    auto params = model_.parameters();
    std::vector<std::vector<float>> grads(params.size());
    for (size_t i = 0; i < params.size(); ++i) grads[i].assign(params[i].tensor->numel(), 0.0f);

    double loss_sum = 0;
    const float inv_b = 1.0f / float(cfg_.batch_size);
    for (int b = 0; b < cfg_.batch_size; ++b) {
        if (order_pos_ >= order_.size()) {
            order_.resize(n);
            for (int i = 0; i < n; ++i) order_[i] = i;
            for (int i = n - 1; i > 0; --i)
                std::swap(order_[i], order_[size_t(rng_.below(i + 1))]);
            order_pos_ = 0;
        }
        const auto& img = images_[order_[order_pos_++]];
        auto pp = data::sample_patch(img.hr, img.lr, cfg_.patch_size, cfg_.model.scale, rng_,
                                     cfg_.augment);
        Tape tape;
        Tape::Scope scope(tape);
        params = model_.parameters();
        for (auto& p : params) tape.watch(*p.tensor);
        auto pred = model_.forward(data::to_tensor(pp.lr));
        auto loss = l1_loss(pred, data::to_tensor(pp.hr));
        tape.backward(loss);
        loss_sum += loss.item();
        for (size_t i = 0; i < params.size(); ++i) {
            const auto& g = tape.grad_buf(params[i].tensor->node());
            for (size_t j = 0; j < g.size(); ++j) grads[i][j] += g[j] * inv_b;
        }
    }

    ++step_;
    StepResult r;
    r.step = step_;
    r.lr = sched_.at(step_);
    r.loss = loss_sum / cfg_.batch_size;
    params = model_.parameters();
    adam_.step(params, grads, float(r.lr));
    return r;
}

std::vector<StepResult> Trainer::run() {
    std::vector<StepResult> log;
    const std::string prefix =
        cfg_.out_dir.empty() ? "model" : cfg_.out_dir + "/model";
    if (!cfg_.out_dir.empty()) std::filesystem::create_directories(cfg_.out_dir);
    while (step_ < cfg_.iters) {
        log.push_back(step());
        if (step_ % cfg_.ckpt_every == 0 || step_ == cfg_.iters) save_checkpoint(prefix);
    }
    if (!cfg_.out_dir.empty()) {
        std::ofstream out(cfg_.out_dir + "/loss_log.csv");
        out << loss_log_csv(log);
    }
    return log;
}

void Trainer::save_checkpoint(const std::string& prefix) {
    auto params = model_.parameters();
    serialize::write_checkpoint(prefix + ".ckpt", params);
    config::KeyValues kv;
    train_config_to(cfg_, kv);
    std::ofstream cfg_out(prefix + ".ckpt.cfg");
    cfg_out << kv.serialize();

    std::ofstream st(prefix + ".train");
    st << step_ << "\n";
    st << rng_.engine() << "\n";
    st << order_.size() << " " << order_pos_;
    for (int v : order_) st << " " << v;
    st << "\n";
    adam_.save(st);
}

void Trainer::resume(const std::string& prefix) {
    auto ckpt = serialize::read_checkpoint(prefix + ".ckpt");
    auto params = model_.parameters();
    serialize::apply_checkpoint(ckpt, params);
    std::ifstream st(prefix + ".train");
    if (!st) throw DataError("missing training state: " + prefix + ".train");
    size_t order_n = 0;
    if (!(st >> step_)) throw FormatError("corrupt training state in " + prefix + ".train");
    if (!(st >> rng_.engine())) throw FormatError("corrupt rng state in " + prefix + ".train");
    if (!(st >> order_n >> order_pos_)) throw FormatError("corrupt sampler state");
    order_.resize(order_n);
    for (size_t i = 0; i < order_n; ++i)
        if (!(st >> order_[i])) throw FormatError("corrupt sampler order");
    adam_.load(st);
}

std::string loss_log_csv(const std::vector<StepResult>& log) {
    std::ostringstream os;
    os << "step,lr,loss\n";
    os.precision(9);
    for (const auto& r : log) os << r.step << "," << r.lr << "," << r.loss << "\n";
    return os.str();
}

}  // namespace promptsr::train
