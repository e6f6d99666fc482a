#include "vseg/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "vseg/data.hpp"
#include "vseg/errors.hpp"
#include "vseg/regions.hpp"
#include "vseg/textio.hpp"

namespace vseg {

void TrainConfig::validate() const {
    if (!(lr_init > 0.0)) throw ConfigError("lr_init must be positive");
    if (!(lr_factor > 1.0)) throw ConfigError("lr_factor must exceed 1");
    if (lr_patience_epochs < 1 || stop_patience_epochs < 1)
        throw ConfigError("patience values must be positive");
    if (!(ema_alpha > 0.0 && ema_alpha < 1.0)) throw ConfigError("ema_alpha must lie in (0,1)");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
    if (batches_per_epoch < 1) throw ConfigError("batches_per_epoch must be positive");
    if (max_epochs < 1) throw ConfigError("max_epochs must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (patch_size < 1) throw ConfigError("patch_size must be positive");
    if (workers < 0) throw ConfigError("workers must be nonnegative");
    loss.validate();
    augment.validate();
}

// ---------------------------------------------------------------------------
// ADAM
// ---------------------------------------------------------------------------

void adam_step(const std::vector<NamedParam<float>>& params, AdamState& state, double lr,
               double weight_decay, const std::string& where) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].tensor.data().size(), 0.0f);
            state.v[i].assign(params[i].tensor.data().size(), 0.0f);
        }
    }
    if (state.m.size() != params.size())
        throw ContractError("adam_step: state does not match the parameter list");
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& p = params[i];
        if (!p.tensor.has_grad()) continue; // not in the graph this step: stays frozen
        auto& data = const_cast<Tensor<float>&>(p.tensor).data();
        const auto& grad = p.tensor.grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < data.size(); ++j) {
            if (!std::isfinite(grad[j]))
                throw Error("non-finite gradient in parameter " + p.name +
                            (where.empty() ? "" : " at " + where));
            const double g = static_cast<double>(grad[j]) + weight_decay * data[j];
            const double mj = beta1 * m[j] + (1.0 - beta1) * g;
            const double vj = beta2 * v[j] + (1.0 - beta2) * g * g;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            data[j] -= static_cast<float>(lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps));
        }
    }
}

// ---------------------------------------------------------------------------
// schedule
// ---------------------------------------------------------------------------

ScheduleState make_schedule(const TrainConfig& cfg) {
    ScheduleState s;
    s.lr = cfg.lr_init;
    return s;
}

void update_schedule(ScheduleState& s, double val_loss, const TrainConfig& cfg) {
    if (!s.ema_init) {
        s.ema = val_loss;
        s.ema_init = true;
        s.best_ema = s.ema;
        s.epochs_since_best = 0;
        s.lr_counter = 0;
        return;
    }
    s.ema = cfg.ema_alpha * s.ema + (1.0 - cfg.ema_alpha) * val_loss;
    if (s.ema < s.best_ema - 1e-8) {
        s.best_ema = s.ema;
        s.epochs_since_best = 0;
        s.lr_counter = 0;
    } else {
        ++s.epochs_since_best;
        ++s.lr_counter;
    }
    if (s.lr_counter >= cfg.lr_patience_epochs) {
        ++s.reductions;
        s.lr = cfg.lr_init / std::pow(cfg.lr_factor, static_cast<double>(s.reductions));
        s.lr_counter = 0;
    }
    if (s.epochs_since_best >= cfg.stop_patience_epochs) s.stop = true;
}

// ---------------------------------------------------------------------------
// minibatch assembly
// ---------------------------------------------------------------------------

namespace {

struct Batch {
    Tensor<float> image;                     // [N,4,P,P,P]
    std::vector<std::uint8_t> class_labels;  // softmax: class indices, N*P^3
    Tensor<float> region_masks;              // sigmoid: [N,3,P,P,P]
};

Batch collate(const std::vector<Patch>& samples, HeadMode mode) {
    const std::int64_t n = static_cast<std::int64_t>(samples.size());
    const std::int64_t P = samples[0].size;
    const std::int64_t pv = P * P * P;
    Batch b;
    std::vector<float> image(static_cast<std::size_t>(n * kNumModalities * pv));
    for (std::int64_t s = 0; s < n; ++s)
        std::copy(samples[s].image.begin(), samples[s].image.end(),
                  image.begin() + s * kNumModalities * pv);
    b.image = Tensor<float>::from_data({n, kNumModalities, P, P, P}, std::move(image));
    if (mode == HeadMode::Softmax) {
        b.class_labels.reserve(static_cast<std::size_t>(n * pv));
        for (const auto& s : samples)
            for (std::uint8_t l : s.labels)
                b.class_labels.push_back(static_cast<std::uint8_t>(class_of_label(l)));
    } else {
        std::vector<float> masks(static_cast<std::size_t>(n * 3 * pv));
        for (std::int64_t s = 0; s < n; ++s) {
            LabelVolume lab;
            lab.shape = {P, P, P};
            lab.spacing = {1, 1, 1};
            lab.data = samples[s].labels;
            const RegionMaps r = labels_to_regions(lab);
            for (std::int64_t i = 0; i < pv; ++i) {
                masks[(s * 3 + 0) * pv + i] = r.wt[i];
                masks[(s * 3 + 1) * pv + i] = r.tc[i];
                masks[(s * 3 + 2) * pv + i] = r.et[i];
            }
        }
        b.region_masks = Tensor<float>::from_data({n, 3, P, P, P}, std::move(masks));
    }
    return b;
}

Batch make_train_batch(const std::vector<Case>& cases, int n_samples, const TrainConfig& cfg,
                       HeadMode mode, Rng& rng) {
    std::vector<Patch> samples;
    samples.reserve(static_cast<std::size_t>(n_samples));
    for (int s = 0; s < n_samples; ++s) {
        const auto idx = rng.uniform_int(0, static_cast<std::int64_t>(cases.size()) - 1);
        Patch p = sample_patch(cases[static_cast<std::size_t>(idx)], cfg.patch_size, rng);
        samples.push_back(augment(p, cfg.augment, rng));
    }
    return collate(samples, mode);
}

// Whole case, zero-padded symmetrically so each spatial dim is divisible by
// the net's downsampling factor; labels pad with background.
Batch full_volume_batch(const Case& c, HeadMode mode, std::int64_t divisor) {
    const auto& shape = c.modalities[0].shape;
    std::array<std::int64_t, 3> padded, lo;
    for (int d = 0; d < 3; ++d) {
        const std::int64_t rem = shape[d] % divisor;
        const std::int64_t total = rem == 0 ? 0 : divisor - rem;
        padded[d] = shape[d] + total;
        lo[d] = total / 2;
    }
    const std::int64_t pv = padded[0] * padded[1] * padded[2];
    std::vector<float> image(static_cast<std::size_t>(kNumModalities * pv), 0.0f);
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(pv), 0);
    for (std::int64_t z = 0; z < shape[0]; ++z)
        for (std::int64_t y = 0; y < shape[1]; ++y) {
            const std::int64_t src_row = (z * shape[1] + y) * shape[2];
            const std::int64_t dst_row =
                ((z + lo[0]) * padded[1] + y + lo[1]) * padded[2] + lo[2];
            for (int m = 0; m < kNumModalities; ++m)
                std::copy_n(c.modalities[m].data.begin() + src_row, shape[2],
                            image.begin() + m * pv + dst_row);
            if (c.label)
                std::copy_n(c.label->data.begin() + src_row, shape[2], labels.begin() + dst_row);
        }
    Batch b;
    b.image = Tensor<float>::from_data({1, kNumModalities, padded[0], padded[1], padded[2]},
                                       std::move(image));
    if (mode == HeadMode::Softmax) {
        b.class_labels.reserve(labels.size());
        for (std::uint8_t l : labels)
            b.class_labels.push_back(static_cast<std::uint8_t>(class_of_label(l)));
    } else {
        LabelVolume lab;
        lab.shape = padded;
        lab.spacing = {1, 1, 1};
        lab.data = std::move(labels);
        const RegionMaps r = labels_to_regions(lab);
        std::vector<float> masks(static_cast<std::size_t>(3 * pv));
        for (std::int64_t i = 0; i < pv; ++i) {
            masks[0 * pv + i] = r.wt[i];
            masks[1 * pv + i] = r.tc[i];
            masks[2 * pv + i] = r.et[i];
        }
        b.region_masks =
            Tensor<float>::from_data({1, 3, padded[0], padded[1], padded[2]}, std::move(masks));
    }
    return b;
}

Tensor<float> batch_loss(const UNet<float>& net, const Batch& batch, int head,
                         const LossConfig& loss_cfg) {
    const Tensor<float> logits = net.forward(batch.image, head);
    if (net.config().head_mode == HeadMode::Softmax)
        return training_loss(logits, batch.class_labels, loss_cfg);
    return region_dice_loss(sigmoid(logits), batch.region_masks, loss_cfg);
}

// ---------------------------------------------------------------------------
// producer pool: batches are pure functions of their global index, computed
// ahead of the consumer by a bounded number of steps and handed back in
// index order
// ---------------------------------------------------------------------------

template <typename BatchT>
class ProducerPool {
public:
    ProducerPool(std::function<BatchT(std::int64_t)> fn, int workers)
        : fn_(std::move(fn)), capacity_(std::max(2 * workers, 2)) {
        if (workers >= 2)
            for (int w = 0; w < workers; ++w) threads_.emplace_back([this] { work(); });
    }

    ~ProducerPool() {
        {
            std::lock_guard<std::mutex> lk(mtx_);
            stop_ = true;
        }
        cv_prod_.notify_all();
        for (auto& t : threads_) t.join();
    }

    BatchT next() {
        if (threads_.empty()) return fn_(consume_++);
        std::unique_lock<std::mutex> lk(mtx_);
        cv_cons_.wait(lk, [this] { return error_ || ready_.count(consume_) != 0; });
        if (error_) std::rethrow_exception(error_);
        BatchT b = std::move(ready_.at(consume_));
        ready_.erase(consume_);
        ++consume_;
        cv_prod_.notify_all();
        return b;
    }

private:
    void work() {
        for (;;) {
            std::int64_t idx;
            {
                std::unique_lock<std::mutex> lk(mtx_);
                cv_prod_.wait(lk, [this] { return stop_ || hand_ - consume_ < capacity_; });
                if (stop_) return;
                idx = hand_++;
            }
            try {
                BatchT b = fn_(idx);
                std::lock_guard<std::mutex> lk(mtx_);
                ready_.emplace(idx, std::move(b));
            } catch (...) {
                std::lock_guard<std::mutex> lk(mtx_);
                if (!error_) error_ = std::current_exception();
            }
            cv_cons_.notify_all();
        }
    }

    std::function<BatchT(std::int64_t)> fn_;
    const std::int64_t capacity_;
    std::vector<std::thread> threads_;
    std::mutex mtx_;
    std::condition_variable cv_prod_, cv_cons_;
    std::map<std::int64_t, BatchT> ready_;
    std::int64_t hand_ = 0;
    std::int64_t consume_ = 0;
    bool stop_ = false;
    std::exception_ptr error_;
};

// ---------------------------------------------------------------------------
// the epoch loop shared by train and cotrain
// ---------------------------------------------------------------------------

std::string loss_kind_name(const LossConfig& cfg) {
    switch (cfg.kind) {
    case LossKind::Dice: return "dice";
    case LossKind::CrossEntropy: return "ce";
    case LossKind::DicePlusCe: return "dice+ce";
    }
    return "?";
}

std::string config_echo(const TrainConfig& cfg) {
    std::string s;
    s += "lr_init=" + fmt_double(cfg.lr_init);
    s += " lr_factor=" + fmt_double(cfg.lr_factor);
    s += " lr_patience_epochs=" + std::to_string(cfg.lr_patience_epochs);
    s += " stop_patience_epochs=" + std::to_string(cfg.stop_patience_epochs);
    s += " ema_alpha=" + fmt_double(cfg.ema_alpha);
    s += " weight_decay=" + fmt_double(cfg.weight_decay);
    s += " batches_per_epoch=" + std::to_string(cfg.batches_per_epoch);
    s += " max_epochs=" + std::to_string(cfg.max_epochs);
    s += " batch_size=" + std::to_string(cfg.batch_size);
    s += " patch_size=" + std::to_string(cfg.patch_size);
    s += " loss=" + loss_kind_name(cfg.loss);
    s += " seed=" + std::to_string(cfg.seed);
    return s;
}

template <typename BatchT>
TrainResult run_epochs(UNet<float>& net, const TrainConfig& cfg, const std::string& out_dir,
                       const EpochCallback& callback,
                       std::function<BatchT(std::int64_t)> produce,
                       std::function<Tensor<float>(const BatchT&)> minibatch_loss,
                       std::function<double()> validation_loss) {
    const auto params = net.parameters();
    AdamState adam;
    ScheduleState sched = make_schedule(cfg);
    TrainResult res;

    std::ofstream log;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        res.log_path = (std::filesystem::path(out_dir) / "train_log.tsv").string();
        res.best_path = (std::filesystem::path(out_dir) / "best.ckpt").string();
        res.final_path = (std::filesystem::path(out_dir) / "final.ckpt").string();
        log.open(res.log_path);
        if (!log) throw ParseError(res.log_path + ": cannot open for writing");
        log << "# " << config_echo(cfg) << '\n';
        log << "epoch\ttrain_loss\tval_loss\tema\tlr\tseconds\n";
    }

    ProducerPool<BatchT> pool(std::move(produce), cfg.workers);
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        double train_sum = 0.0;
        for (int b = 0; b < cfg.batches_per_epoch; ++b) {
            const BatchT batch = pool.next();
            for (const auto& p : params) const_cast<Tensor<float>&>(p.tensor).zero_grad();
            const Tensor<float> loss = minibatch_loss(batch);
            const double value = loss.item();
            if (!std::isfinite(value))
                throw Error("non-finite training loss at epoch " + std::to_string(epoch));
            backward(loss);
            adam_step(params, adam, sched.lr, cfg.weight_decay, "epoch " + std::to_string(epoch));
            train_sum += value;
            ++res.steps;
        }
        const double val = validation_loss();
        if (!std::isfinite(val))
            throw Error("non-finite validation loss at epoch " + std::to_string(epoch));
        update_schedule(sched, val, cfg);

        EpochLog row;
        row.epoch = epoch;
        row.train_loss = train_sum / cfg.batches_per_epoch;
        row.val_loss = val;
        row.ema = sched.ema;
        row.lr = sched.lr;
        row.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.log.push_back(row);
        if (log) {
            log << row.epoch << '\t' << fmt_double(row.train_loss) << '\t'
                << fmt_double(row.val_loss) << '\t' << fmt_double(row.ema) << '\t'
                << fmt_double(row.lr) << '\t' << fmt_double(row.seconds) << '\n';
            log.flush();
        }
        if (sched.epochs_since_best == 0) {
            res.best_epoch = epoch;
            if (!res.best_path.empty())
                save_checkpoint(Checkpoint{net, epoch, sched.lr, sched.ema}, res.best_path);
        }
        if (callback && callback(row, net)) break;
        if (sched.stop) break;
    }
    if (!res.final_path.empty()) {
        const EpochLog& last = res.log.back();
        save_checkpoint(Checkpoint{net, last.epoch, sched.lr, sched.ema}, res.final_path);
    }
    return res;
}

} // namespace

// ---------------------------------------------------------------------------
// checkpoint IO
// ---------------------------------------------------------------------------

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    const ModelConfig& mc = ck.net.config();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError(path + ": cannot open for writing");
    out << "VSEGCKPT1\n";
    out << "in_channels=" << mc.in_channels << '\n';
    out << "base_features=" << mc.base_features << '\n';
    out << "depth=" << mc.depth << '\n';
    out << "num_classes=" << mc.num_classes << '\n';
    out << "num_regions=" << mc.num_regions << '\n';
    out << "head_mode=" << (mc.head_mode == HeadMode::Softmax ? "softmax" : "sigmoid") << '\n';
    out << "leakiness=" << fmt_double(mc.leakiness) << '\n';
    out << "num_heads=" << mc.num_heads << '\n';
    out << "epoch=" << ck.epoch << '\n';
    out << "lr=" << fmt_double(ck.lr) << '\n';
    out << "ema=" << fmt_double(ck.ema) << '\n';
    const auto params = ck.net.parameters();
    out << "params=" << params.size() << '\n';
    for (const auto& p : params) out << p.name << ' ' << p.tensor.numel() << '\n';
    out << "payload\n";
    for (const auto& p : params)
        out.write(reinterpret_cast<const char*>(p.tensor.data().data()),
                  static_cast<std::streamsize>(p.tensor.data().size() * sizeof(float)));
    if (!out) throw ParseError(path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open");
    std::string line;
    auto next_line = [&]() {
        if (!std::getline(in, line)) throw ParseError(path + ": unexpected end of header");
        return line;
    };
    if (next_line() != "VSEGCKPT1") throw ParseError(path + ": bad checkpoint magic '" + line + "'");
    auto kv = [&](const std::string& key) {
        next_line();
        const std::string prefix = key + "=";
        if (line.rfind(prefix, 0) != 0)
            throw ParseError(path + ": expected '" + key + "=', found '" + line + "'");
        return line.substr(prefix.size());
    };
    ModelConfig mc;
    mc.in_channels = static_cast<int>(parse_int(kv("in_channels"), path));
    mc.base_features = static_cast<int>(parse_int(kv("base_features"), path));
    mc.depth = static_cast<int>(parse_int(kv("depth"), path));
    mc.num_classes = static_cast<int>(parse_int(kv("num_classes"), path));
    mc.num_regions = static_cast<int>(parse_int(kv("num_regions"), path));
    const std::string mode = kv("head_mode");
    if (mode == "softmax") mc.head_mode = HeadMode::Softmax;
    else if (mode == "sigmoid") mc.head_mode = HeadMode::Sigmoid;
    else throw ParseError(path + ": unknown head_mode '" + mode + "'");
    mc.leakiness = parse_double(kv("leakiness"), path);
    mc.num_heads = static_cast<int>(parse_int(kv("num_heads"), path));

    Checkpoint ck;
    ck.epoch = static_cast<int>(parse_int(kv("epoch"), path));
    ck.lr = parse_double(kv("lr"), path);
    ck.ema = parse_double(kv("ema"), path);
    const std::int64_t n_params = parse_int(kv("params"), path);

    ck.net = UNet<float>::build(mc, 0);
    const auto params = ck.net.parameters();
    if (static_cast<std::int64_t>(params.size()) != n_params)
        throw ParseError(path + ": expected " + std::to_string(params.size()) +
                         " parameters, file declares " + std::to_string(n_params));
    for (const auto& p : params) {
        next_line();
        const auto sp = line.find(' ');
        if (sp == std::string::npos) throw ParseError(path + ": malformed parameter line '" + line + "'");
        const std::string name = line.substr(0, sp);
        const std::int64_t numel = parse_int(line.substr(sp + 1), path + " " + name);
        if (name != p.name)
            throw ParseError(path + ": parameter order mismatch: expected " + p.name + ", found " + name);
        if (numel != p.tensor.numel())
            throw ParseError(path + ": parameter " + name + " expects " +
                             std::to_string(p.tensor.numel()) + " values, file declares " +
                             std::to_string(numel));
    }
    if (next_line() != "payload") throw ParseError(path + ": missing payload marker");
    for (const auto& p : params) {
        auto& data = const_cast<Tensor<float>&>(p.tensor).data();
        const std::streamsize bytes = static_cast<std::streamsize>(data.size() * sizeof(float));
        in.read(reinterpret_cast<char*>(data.data()), bytes);
        if (in.gcount() != bytes)
            throw ParseError(path + ": truncated payload at parameter " + p.name);
    }
    if (in.peek() != std::ifstream::traits_type::eof())
        throw ParseError(path + ": trailing bytes after payload");
    return ck;
}

// ---------------------------------------------------------------------------
// train / cotrain
// ---------------------------------------------------------------------------

namespace {

void check_sigmoid_loss(const UNet<float>& net, const TrainConfig& cfg) {
    if (net.config().head_mode == HeadMode::Sigmoid && cfg.loss.kind != LossKind::Dice)
        throw ConfigError("sigmoid-head training supports the Dice loss only");
}

// Fixed validation items, built once: center patches by default, padded full
// volumes by flag.
std::vector<Batch> validation_items(const std::vector<Case>& cases, const TrainConfig& cfg,
                                    const ModelConfig& mc) {
    std::vector<Batch> items;
    items.reserve(cases.size());
    const std::int64_t divisor = std::int64_t{1} << (mc.depth - 1);
    for (const auto& c : cases) {
        if (cfg.full_volume_val) {
            items.push_back(full_volume_batch(c, mc.head_mode, divisor));
        } else {
            std::vector<Patch> one{center_patch(c, cfg.patch_size)};
            items.push_back(collate(one, mc.head_mode));
        }
    }
    return items;
}

double mean_validation_loss(const UNet<float>& net, const std::vector<Batch>& items, int head,
                            const LossConfig& loss_cfg) {
    NoGradGuard guard;
    double sum = 0.0;
    for (const auto& item : items) sum += batch_loss(net, item, head, loss_cfg).item();
    return sum / static_cast<double>(items.size());
}

} // namespace

TrainResult train(UNet<float>& net, const std::vector<Case>& train_cases,
                  const std::vector<Case>& val_cases, const TrainConfig& cfg,
                  const std::string& out_dir, const EpochCallback& callback) {
    cfg.validate();
    check_sigmoid_loss(net, cfg);
    if (train_cases.empty() || val_cases.empty())
        throw ContractError("train: training and validation case lists must be nonempty");

    const HeadMode mode = net.config().head_mode;
    const auto val_items = validation_items(val_cases, cfg, net.config());
    auto produce = [&train_cases, cfg, mode](std::int64_t gidx) {
        Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(gidx)));
        return make_train_batch(train_cases, cfg.batch_size, cfg, mode, rng);
    };
    auto loss_fn = [&net, &cfg](const Batch& b) { return batch_loss(net, b, 0, cfg.loss); };
    auto val_fn = [&net, &val_items, &cfg] {
        return mean_validation_loss(net, val_items, 0, cfg.loss);
    };
    return run_epochs<Batch>(net, cfg, out_dir, callback, produce, loss_fn, val_fn);
}

namespace {

struct CoBatch {
    Batch a, b;
};

} // namespace

TrainResult cotrain(UNet<float>& net, const std::vector<Case>& train_a,
                    const std::vector<Case>& train_b, const std::vector<Case>& val_a,
                    const std::vector<Case>& val_b, const TrainConfig& cfg,
                    const std::string& out_dir, const EpochCallback& callback) {
    cfg.validate();
    check_sigmoid_loss(net, cfg);
    if (net.config().num_heads != 2) throw ContractError("cotrain requires exactly two heads");
    if (train_a.empty() || train_b.empty() || val_a.empty() || val_b.empty())
        throw ContractError("cotrain: all four case lists must be nonempty");

    const HeadMode mode = net.config().head_mode;
    const auto items_a = validation_items(val_a, cfg, net.config());
    const auto items_b = validation_items(val_b, cfg, net.config());
    auto produce = [&train_a, &train_b, cfg, mode](std::int64_t gidx) {
        Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(gidx)));
        CoBatch cb;
        cb.a = make_train_batch(train_a, 1, cfg, mode, rng);
        cb.b = make_train_batch(train_b, 1, cfg, mode, rng);
        return cb;
    };
    auto loss_fn = [&net, &cfg](const CoBatch& cb) {
        const Tensor<float> la = batch_loss(net, cb.a, 0, cfg.loss);
        const Tensor<float> lb = batch_loss(net, cb.b, 1, cfg.loss);
        return mul(add(la, lb), 0.5f);
    };
    auto val_fn = [&net, &items_a, &items_b, &cfg] {
        return 0.5 * (mean_validation_loss(net, items_a, 0, cfg.loss) +
                      mean_validation_loss(net, items_b, 1, cfg.loss));
    };
    return run_epochs<CoBatch>(net, cfg, out_dir, callback, produce, loss_fn, val_fn);
}

} // namespace vseg
