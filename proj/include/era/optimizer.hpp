#pragma once

#include "era/adapter.hpp"
#include "era/losses.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace era {

struct AdamWState {
    Eigen::MatrixXd m;
    Eigen::MatrixXd v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamWState for_adapter(const Adapter& a);
};

struct TrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    int batch_size = 256;
    int max_epochs = 100;
    std::optional<int> patience;  // disabled when absent
    double warmup_fraction = 0.0;
    double temperature = 0.05;
    uint64_t seed = 0;

    void validate() const;

    // Paper-recipe defaults for the two stages.
    static TrainConfig alignment_defaults(uint64_t seed);
    static TrainConfig adaptation_defaults(uint64_t seed);
};

// Linear warmup over the first ceil(warmup_fraction * total_steps) steps,
// then constant at base_lr.
double lr_at(long step, long total_steps, double base_lr, double warmup_fraction);

// One decoupled-weight-decay Adam update, in place.
void adamw_step(Adapter& w, AdamWState& state, const Eigen::MatrixXd& grad, double lr,
                double weight_decay);

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    std::optional<double> val_loss;
    double lr = 0.0;
    std::string timestamp;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    int stop_epoch = 0;              // last epoch that ran
    std::optional<int> best_epoch;   // epoch of the returned snapshot, when validated
    double wall_seconds = 0.0;
};

void write_train_log(const TrainReport& report, const std::string& path);

struct TrainResult {
    Adapter adapter;
    TrainReport report;
};

// Evaluates loss and gradient over a subset of example indices.
using BatchLossFn = std::function<LossValue(const Adapter&, const std::vector<size_t>&)>;
// Evaluates the validation loss of the current adapter after an epoch.
using ValLossFn = std::function<double(const Adapter&)>;

// Epoch loop: deterministic per-epoch reshuffle from (cfg.seed, epoch),
// AdamW updates under the warmup schedule, epoch-level validation, and
// early stopping with best-snapshot restore when patience is set. With
// patience disabled the final adapter is returned.
TrainResult train_loop(const Adapter& init, size_t n_examples, const BatchLossFn& loss,
                       const TrainConfig& cfg, const ValLossFn* validation = nullptr);

}  // namespace era
