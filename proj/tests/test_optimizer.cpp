#include <doctest.h>

#include <era/losses.hpp>
#include <era/optimizer.hpp>
#include <era/rng.hpp>

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

using namespace era;

namespace {

Adapter one_by_one(double w) {
    Adapter a;
    a.weights = Eigen::MatrixXd::Constant(1, 1, w);
    return a;
}

AlignmentBatch toy_alignment_batch(Eigen::Index n, Eigen::Index dim, uint64_t seed) {
    rng::Stream s(seed);
    Eigen::MatrixXd q(n, dim), d(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd v(dim), w(dim);
        for (Eigen::Index j = 0; j < dim; ++j) {
            v[j] = s.next_gaussian();
            w[j] = s.next_gaussian();
        }
        q.row(i) = v.transpose() / v.norm();
        d.row(i) = w.transpose() / w.norm();
    }
    return AlignmentBatch{q, d};
}

}  // namespace

TEST_CASE("adamw first steps match hand-computed values") {
    // With a constant gradient of 1, bias correction makes m_hat = 1 and
    // v_hat = 1 at every step, so each update is lr/(1 + eps) ~ lr.
    Adapter w = one_by_one(1.0);
    AdamWState st = AdamWState::for_adapter(w);
    Eigen::MatrixXd g = Eigen::MatrixXd::Constant(1, 1, 1.0);

    adamw_step(w, st, g, 0.1, 0.0);
    CHECK(w.weights(0, 0) == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(st.step == 1);

    adamw_step(w, st, g, 0.1, 0.0);
    CHECK(w.weights(0, 0) == doctest::Approx(0.8).epsilon(1e-7));

    // Decoupled weight decay: w -= lr * (update + wd * w).
    Adapter wd = one_by_one(1.0);
    AdamWState st2 = AdamWState::for_adapter(wd);
    adamw_step(wd, st2, g, 0.1, 0.5);
    CHECK(wd.weights(0, 0) == doctest::Approx(0.85).epsilon(1e-7));
}

TEST_CASE("adamw validates shapes and finiteness") {
    Adapter w = one_by_one(1.0);
    AdamWState st = AdamWState::for_adapter(w);
    CHECK_THROWS_AS(adamw_step(w, st, Eigen::MatrixXd::Zero(2, 1), 0.1, 0.0),
                    std::invalid_argument);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Constant(1, 1, std::nan(""));
    CHECK_THROWS_AS(adamw_step(w, st, bad, 0.1, 0.0), std::invalid_argument);

    AdamWState mismatched = AdamWState::for_adapter(one_by_one(0.0));
    mismatched.m.resize(2, 2);
    mismatched.v.resize(2, 2);
    CHECK_THROWS_AS(adamw_step(w, mismatched, Eigen::MatrixXd::Zero(1, 1), 0.1, 0.0),
                    std::invalid_argument);
}

TEST_CASE("lr warmup ramps linearly then holds at base") {
    // 100 steps, fraction 0.1: exactly 10 warmup steps despite 0.1 * 100
    // landing a hair above 10 in binary floating point.
    CHECK(lr_at(0, 100, 1.0, 0.1) == doctest::Approx(0.1));
    CHECK(lr_at(4, 100, 1.0, 0.1) == doctest::Approx(0.5));
    CHECK(lr_at(8, 100, 1.0, 0.1) == doctest::Approx(0.9));
    CHECK(lr_at(9, 100, 1.0, 0.1) == 1.0);
    CHECK(lr_at(10, 100, 1.0, 0.1) == 1.0);
    CHECK(lr_at(99, 100, 1.0, 0.1) == 1.0);

    // No warmup: full rate from the first step.
    CHECK(lr_at(0, 100, 2.5, 0.0) == 2.5);

    CHECK_THROWS_AS(lr_at(0, 0, 1.0, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(lr_at(-1, 100, 1.0, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(lr_at(100, 100, 1.0, 0.1), std::invalid_argument);
}

TEST_CASE("train config validation and stage defaults") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    TrainConfig bad = cfg;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.warmup_fraction = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.patience = -1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    TrainConfig al = TrainConfig::alignment_defaults(7);
    CHECK(al.learning_rate == 1e-3);
    CHECK(al.weight_decay == 1e-2);
    CHECK(al.batch_size == 256);
    CHECK(al.max_epochs == 100);
    CHECK(!al.patience);
    CHECK(al.seed == 7);

    TrainConfig ad = TrainConfig::adaptation_defaults(9);
    CHECK(ad.learning_rate == 1e-5);
    CHECK(ad.weight_decay == 1e-4);
    CHECK(ad.max_epochs == 1000);
    CHECK(ad.patience == 5);
    CHECK(ad.warmup_fraction == doctest::Approx(0.1));
    CHECK(ad.temperature == doctest::Approx(0.05));
}

TEST_CASE("early stopping follows the scripted validation trace") {
    // Trace: epoch 2 is the best; epochs 3..7 are five non-improving
    // epochs, so patience 5 stops after epoch 7 and restores epoch 2.
    const std::vector<double> trace = {1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99, 1.0};
    size_t calls = 0;
    std::vector<Adapter> snapshots;
    ValLossFn validation = [&](const Adapter& a) {
        snapshots.push_back(a);
        REQUIRE(calls < trace.size());
        return trace[calls++];
    };

    BatchLossFn loss = [](const Adapter& a, const std::vector<size_t>&) {
        LossValue lv;
        lv.value = a.weights.squaredNorm();
        lv.grad = Eigen::MatrixXd::Constant(a.query_dim(), a.doc_dim(), 0.25);
        return lv;
    };

    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 4;
    cfg.max_epochs = 50;
    cfg.patience = 5;
    cfg.seed = 3;

    Adapter init = init_adapter(2, 3, InitScheme::scaled_random, 3);
    TrainResult res = train_loop(init, 4, loss, cfg, &validation);

    CHECK(res.report.stop_epoch == 7);
    REQUIRE(res.report.best_epoch.has_value());
    CHECK(*res.report.best_epoch == 2);
    CHECK(res.report.epochs.size() == 7);
    CHECK(calls == 7);

    // The returned adapter is the epoch-2 snapshot, not the last state.
    REQUIRE(snapshots.size() == 7);
    CHECK(res.adapter.weights == snapshots[1].weights);
    CHECK(res.adapter.weights != snapshots[6].weights);

    // Per-epoch records carry the scripted validation values.
    REQUIRE(res.report.epochs[1].val_loss.has_value());
    CHECK(*res.report.epochs[1].val_loss == doctest::Approx(0.9));
    CHECK(res.report.epochs[0].epoch == 1);
    CHECK(res.report.epochs[6].epoch == 7);
}

TEST_CASE("train loop without patience runs every epoch and descends") {
    AlignmentBatch b = toy_alignment_batch(10, 4, 21);
    BatchLossFn loss = [&](const Adapter& a, const std::vector<size_t>& rows) {
        return alignment_loss(a, b.subset(rows));
    };

    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 3;
    cfg.max_epochs = 40;
    cfg.seed = 5;

    Adapter init = init_adapter(4, 4, InitScheme::identity_like, 0);
    TrainResult res = train_loop(init, 10, loss, cfg, nullptr);

    CHECK(res.report.stop_epoch == 40);
    CHECK(res.report.epochs.size() == 40);
    CHECK(!res.report.best_epoch.has_value());
    CHECK(res.report.epochs.front().train_loss > res.report.epochs.back().train_loss);
    CHECK(res.report.wall_seconds >= 0.0);

    // Same seed reproduces the run exactly; a different seed shuffles
    // batches differently and lands elsewhere.
    TrainResult again = train_loop(init, 10, loss, cfg, nullptr);
    CHECK(res.adapter.weights == again.adapter.weights);
    for (size_t i = 0; i < res.report.epochs.size(); ++i)
        CHECK(res.report.epochs[i].train_loss == again.report.epochs[i].train_loss);

    TrainConfig other = cfg;
    other.seed = 6;
    TrainResult moved = train_loop(init, 10, loss, other, nullptr);
    CHECK(res.adapter.weights != moved.adapter.weights);
}

TEST_CASE("train loop input validation") {
    BatchLossFn loss = [](const Adapter& a, const std::vector<size_t>&) {
        LossValue lv;
        lv.value = 0.0;
        lv.grad = Eigen::MatrixXd::Zero(a.query_dim(), a.doc_dim());
        return lv;
    };
    TrainConfig cfg;
    Adapter init = init_adapter(2, 2, InitScheme::identity_like, 0);
    CHECK_THROWS_AS(train_loop(init, 0, loss, cfg, nullptr), std::invalid_argument);

    cfg.patience = 3;  // patience without a validation evaluator
    CHECK_THROWS_AS(train_loop(init, 4, loss, cfg, nullptr), std::invalid_argument);
}

TEST_CASE("train log is one json object per epoch") {
    TrainReport report;
    for (int e = 1; e <= 3; ++e) {
        EpochRecord rec;
        rec.epoch = e;
        rec.train_loss = 1.0 / e;
        if (e > 1) rec.val_loss = 0.5 / e;
        rec.lr = 1e-3;
        rec.timestamp = "2026-01-01T00:00:00Z";
        report.epochs.push_back(rec);
    }
    const std::string path = "test_train_log.jsonl";
    write_train_log(report, path);

    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        nlohmann::json j = nlohmann::json::parse(line);
        ++n;
        CHECK(j["epoch"] == n);
        CHECK(j["train_loss"] == doctest::Approx(1.0 / n));
        CHECK(j["lr"] == doctest::Approx(1e-3));
        if (n == 1)
            CHECK(j["val_loss"].is_null());
        else
            CHECK(j["val_loss"] == doctest::Approx(0.5 / n));
        CHECK(j.contains("timestamp"));
    }
    CHECK(n == 3);
    std::remove(path.c_str());
}
