#include "era/optimizer.hpp"

#include "era/rng.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <stdexcept>

namespace era {

namespace {

std::string utc_timestamp() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

AdamWState AdamWState::for_adapter(const Adapter& a) {
    AdamWState s;
    s.m = Eigen::MatrixXd::Zero(a.query_dim(), a.doc_dim());
    s.v = Eigen::MatrixXd::Zero(a.query_dim(), a.doc_dim());
    return s;
}

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be non-negative");
    if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
    if (max_epochs <= 0) throw std::invalid_argument("max_epochs must be positive");
    if (patience && *patience < 0) throw std::invalid_argument("patience must be non-negative");
    if (warmup_fraction < 0.0 || warmup_fraction > 1.0)
        throw std::invalid_argument("warmup_fraction must lie in [0, 1]");
    if (temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
}

TrainConfig TrainConfig::alignment_defaults(uint64_t seed) {
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.weight_decay = 1e-2;
    cfg.batch_size = 256;
    cfg.max_epochs = 100;
    cfg.patience = std::nullopt;
    cfg.warmup_fraction = 0.0;
    cfg.seed = seed;
    return cfg;
}

TrainConfig TrainConfig::adaptation_defaults(uint64_t seed) {
    TrainConfig cfg;
    cfg.learning_rate = 1e-5;
    cfg.weight_decay = 1e-4;
    cfg.batch_size = 256;
    cfg.max_epochs = 1000;
    cfg.patience = 5;
    cfg.warmup_fraction = 0.1;
    cfg.temperature = 0.05;
    cfg.seed = seed;
    return cfg;
}

double lr_at(long step, long total_steps, double base_lr, double warmup_fraction) {
    if (total_steps <= 0) throw std::invalid_argument("total_steps must be positive");
    if (step < 0 || step >= total_steps)
        throw std::invalid_argument("step " + std::to_string(step) + " outside [0, " +
                                    std::to_string(total_steps) + ")");
    // Robust ceil: 0.1 * 100 lands a hair above 10 in binary floating point.
    long warmup_steps =
        static_cast<long>(std::ceil(warmup_fraction * static_cast<double>(total_steps) - 1e-9));
    if (warmup_steps <= 0 || step >= warmup_steps) return base_lr;
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
}

void adamw_step(Adapter& w, AdamWState& state, const Eigen::MatrixXd& grad, double lr,
                double weight_decay) {
    if (grad.rows() != w.weights.rows() || grad.cols() != w.weights.cols())
        throw std::invalid_argument("gradient shape does not match adapter");
    if (state.m.rows() != w.weights.rows() || state.m.cols() != w.weights.cols())
        throw std::invalid_argument("optimizer state shape does not match adapter");
    if (!grad.allFinite())
        throw std::invalid_argument("non-finite gradient entry; step aborted");

    state.step += 1;
    const double t = static_cast<double>(state.step);
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
    const double bias1 = 1.0 - std::pow(state.beta1, t);
    const double bias2 = 1.0 - std::pow(state.beta2, t);
    Eigen::MatrixXd m_hat = state.m / bias1;
    Eigen::MatrixXd denom = (state.v / bias2).cwiseSqrt();
    denom.array() += state.eps;
    w.weights -= lr * (m_hat.cwiseQuotient(denom) + weight_decay * w.weights);
}

void write_train_log(const TrainReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write train log: " + path);
    for (const auto& rec : report.epochs) {
        nlohmann::json j;
        j["epoch"] = rec.epoch;
        j["train_loss"] = rec.train_loss;
        if (rec.val_loss)
            j["val_loss"] = *rec.val_loss;
        else
            j["val_loss"] = nullptr;
        j["lr"] = rec.lr;
        j["timestamp"] = rec.timestamp;
        out << j.dump() << "\n";
    }
}

TrainResult train_loop(const Adapter& init, size_t n_examples, const BatchLossFn& loss,
                       const TrainConfig& cfg, const ValLossFn* validation) {
    cfg.validate();
    if (n_examples == 0) throw std::invalid_argument("empty batch stream");
    if (cfg.patience && validation == nullptr)
        throw std::invalid_argument("patience requires a validation evaluator");

    const auto t0 = std::chrono::steady_clock::now();

    Adapter adapter = init;
    AdamWState state = AdamWState::for_adapter(adapter);

    const long steps_per_epoch =
        static_cast<long>((n_examples + static_cast<size_t>(cfg.batch_size) - 1) /
                          static_cast<size_t>(cfg.batch_size));
    const long total_steps = static_cast<long>(cfg.max_epochs) * steps_per_epoch;

    TrainResult result;
    Adapter best_adapter = adapter;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    int non_improving = 0;
    long step = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng::Stream shuffle_stream(rng::mix(rng::mix(cfg.seed, "epoch-shuffle"),
                                            static_cast<uint64_t>(epoch)));
        std::vector<size_t> order = rng::permutation(n_examples, shuffle_stream);

        double epoch_loss = 0.0;
        double lr_used = cfg.learning_rate;
        for (size_t begin = 0; begin < n_examples; begin += static_cast<size_t>(cfg.batch_size)) {
            size_t end = std::min(begin + static_cast<size_t>(cfg.batch_size), n_examples);
            std::vector<size_t> batch(order.begin() + static_cast<long>(begin),
                                      order.begin() + static_cast<long>(end));
            lr_used = lr_at(step, total_steps, cfg.learning_rate, cfg.warmup_fraction);
            LossValue lv = loss(adapter, batch);
            if (!std::isfinite(lv.value))
                throw std::runtime_error("non-finite training loss at epoch " +
                                         std::to_string(epoch));
            adamw_step(adapter, state, lv.grad, lr_used, cfg.weight_decay);
            epoch_loss += lv.value * static_cast<double>(batch.size());
            ++step;
        }
        epoch_loss /= static_cast<double>(n_examples);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss;
        rec.lr = lr_used;
        rec.timestamp = utc_timestamp();
        if (validation) rec.val_loss = (*validation)(adapter);
        result.report.epochs.push_back(rec);
        result.report.stop_epoch = epoch;

        if (validation) {
            if (*rec.val_loss < best_val) {
                best_val = *rec.val_loss;
                best_adapter = adapter;
                best_epoch = epoch;
                non_improving = 0;
            } else {
                ++non_improving;
            }
            if (cfg.patience && non_improving >= *cfg.patience) break;
        }
    }

    if (cfg.patience) {
        result.adapter = best_adapter;
        result.report.best_epoch = best_epoch;
    } else {
        result.adapter = adapter;
        if (validation) result.report.best_epoch = best_epoch;
    }
    result.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace era
