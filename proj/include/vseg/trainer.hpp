#pragma once

// The optimization loop: ADAM with l2 weight decay, a plateau learning-rate
// schedule and early stopping driven by an exponential moving average of the
// validation loss, checkpointing, and two-dataset cotraining where each head
// learns from its own dataset while the trunk learns from both.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vseg/augment.hpp"
#include "vseg/layers.hpp"
#include "vseg/loss.hpp"
#include "vseg/volume.hpp"

namespace vseg {

struct TrainConfig {
    double lr_init = 1e-4;
    double lr_factor = 5.0; // divisor per plateau reduction
    int lr_patience_epochs = 30;
    int stop_patience_epochs = 60;
    double ema_alpha = 0.95;
    double weight_decay = 1e-5;
    int batches_per_epoch = 250;
    int max_epochs = 500;
    int batch_size = 2;
    std::int64_t patch_size = 128;
    LossConfig loss;
    AugmentConfig augment;
    // Validation protocol: center-cropped patches of patch_size by default;
    // full padded volumes when set.
    bool full_volume_val = false;
    int workers = 1; // batch producer threads (0/1 = synchronous)
    std::uint64_t seed = 0;

    void validate() const; // throws ConfigError
};

// ADAM first/second moment buffers; sized to the parameter list on first use.
struct AdamState {
    std::vector<std::vector<float>> m, v;
    std::int64_t t = 0;
};

// One ADAM update (beta1=0.9, beta2=0.999, eps=1e-8, bias-corrected) over
// every parameter's accumulated gradient, with weight_decay*param added to
// the gradient first. Parameters without a gradient buffer (e.g. heads that
// did not participate in the loss) are left untouched. A non-finite gradient
// aborts with the parameter name prefixed by `where` (e.g. "epoch 3").
void adam_step(const std::vector<NamedParam<float>>& params, AdamState& state, double lr,
               double weight_decay, const std::string& where = "");

// Plateau schedule state. lr always equals lr_init / lr_factor^reductions.
struct ScheduleState {
    double lr = 0.0;
    double ema = 0.0;
    bool ema_init = false;
    double best_ema = 0.0;
    int epochs_since_best = 0; // 0 exactly when the last update improved
    int lr_counter = 0;        // epochs since improvement or last reduction
    int reductions = 0;
    bool stop = false;
};

ScheduleState make_schedule(const TrainConfig& cfg);

// Feeds one epoch's validation loss: updates the moving average
// (initialized to the first value), detects improvement (ema < best - 1e-8),
// divides lr by lr_factor after lr_patience_epochs stale epochs (counter
// resets on each reduction), and signals stop after stop_patience_epochs
// without improvement.
void update_schedule(ScheduleState& s, double val_loss, const TrainConfig& cfg);

struct Checkpoint {
    UNet<float> net;
    int epoch = 0;
    double lr = 0.0;
    double ema = 0.0;
};

// One file per checkpoint: a text header (config echo, epoch, lr, ema, named
// parameter table) followed by the raw little-endian f32 payload of all
// parameters in declaration order. Round-trips bit-exactly.
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct EpochLog {
    int epoch = 0; // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double ema = 0.0;
    double lr = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    std::int64_t steps = 0; // optimizer steps taken
    int best_epoch = 0;
    std::string best_path, final_path, log_path; // empty when out_dir is empty
};

// Called after each epoch; returning true stops training early (the final
// checkpoint still reflects the net at that point).
using EpochCallback = std::function<bool(const EpochLog&, UNet<float>&)>;

// Patch-sampled, augmented minibatch training of head 0 on train_cases with
// per-epoch validation on val_cases. Writes best/final checkpoints and a TSV
// log (epoch, train_loss, val_loss, ema, lr, seconds) under out_dir when
// given. Deterministic for a fixed (cfg.seed, worker count); batches are in
// fact derived from their global index alone, so worker count does not alter
// the sequence either.
TrainResult train(UNet<float>& net, const std::vector<Case>& train_cases,
                  const std::vector<Case>& val_cases, const TrainConfig& cfg,
                  const std::string& out_dir = "", const EpochCallback& callback = {});

// Two-head cotraining: each minibatch holds one sample from each dataset,
// routed through its own head; the two losses are averaged. Head k's
// parameters receive gradient only from dataset k; the shared trunk from
// both. Validation loss is the mean of the two per-dataset losses.
TrainResult cotrain(UNet<float>& net, const std::vector<Case>& train_a,
                    const std::vector<Case>& train_b, const std::vector<Case>& val_a,
                    const std::vector<Case>& val_b, const TrainConfig& cfg,
                    const std::string& out_dir = "", const EpochCallback& callback = {});

} // namespace vseg
