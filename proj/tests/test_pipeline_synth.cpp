#include <doctest.h>

#include <era/metrics.hpp>
#include <era/pipeline.hpp>
#include <era/retrieval.hpp>
#include <era/synthetic.hpp>

#include <algorithm>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

using namespace era;

namespace {

TaskTag uniform_tags(const std::vector<std::string>& ids, const std::string& task) {
    TaskTag tags;
    for (const auto& id : ids) tags.assignment[id] = {task, "g0"};
    return tags;
}

std::vector<std::string> numbered(const std::string& prefix, int n) {
    std::vector<std::string> ids;
    char buf[32];
    for (int i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof buf, "%s%03d", prefix.c_str(), i);
        ids.emplace_back(buf);
    }
    return ids;
}

bool is_subset(const std::set<std::string>& a, const std::set<std::string>& b) {
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

TEST_CASE("split proportions on a single 100-query task") {
    std::vector<std::string> ids = numbered("u", 100);
    TaskTag tags = uniform_tags(ids, "t0");

    SplitSpec spec;
    spec.train_ratio = 0.2;
    spec.seed = 7;
    SplitResult split = split_dataset(ids, tags, spec);

    CHECK(split.test.size() == 50);
    CHECK(split.val.size() == 10);
    CHECK(split.train.size() == 20);
    CHECK(split.test_only_tasks.empty());

    // 20 queries stay unused; the three sets are pairwise disjoint.
    std::set<std::string> all;
    all.insert(split.train.begin(), split.train.end());
    all.insert(split.val.begin(), split.val.end());
    all.insert(split.test.begin(), split.test.end());
    CHECK(all.size() == 80);

    // 0.05 * 100 sits a hair above 5 in floating point; the count must
    // still be 5, not 6.
    spec.train_ratio = 0.05;
    CHECK(split_dataset(ids, tags, spec).train.size() == 5);
    spec.train_ratio = 0.1;
    CHECK(split_dataset(ids, tags, spec).train.size() == 10);
}

TEST_CASE("val and test membership never depend on the train ratio") {
    // Three tasks of 30 queries each.
    std::vector<std::string> ids = numbered("u", 90);
    TaskTag tags;
    for (int i = 0; i < 90; ++i) tags.assignment[ids[i]] = {"t" + std::to_string(i % 3), "g0"};

    SplitSpec spec;
    spec.seed = 5;
    spec.train_ratio = 0.05;
    SplitResult base = split_dataset(ids, tags, spec);
    CHECK(base.test.size() == 45);
    CHECK(base.val.size() == 9);
    CHECK(base.train.size() == 6);  // ceil(1.5) = 2 per task

    std::set<std::string> prev_train = base.train;
    for (double ratio : {0.10, 0.20, 0.40}) {
        spec.train_ratio = ratio;
        SplitResult wider = split_dataset(ids, tags, spec);
        CHECK(wider.val == base.val);
        CHECK(wider.test == base.test);
        CHECK(is_subset(prev_train, wider.train));
        prev_train = wider.train;
    }
    spec.train_ratio = 0.40;
    CHECK(split_dataset(ids, tags, spec).train.size() == 36);

    // A different seed reshuffles membership.
    spec.seed = 6;
    CHECK(split_dataset(ids, tags, spec).test != base.test);
}

TEST_CASE("tiny tasks go entirely to test and are reported") {
    std::vector<std::string> ids = numbered("u", 32);
    TaskTag tags;
    for (int i = 0; i < 30; ++i) tags.assignment[ids[i]] = {"big", "g0"};
    tags.assignment[ids[30]] = {"tiny", "g0"};
    tags.assignment[ids[31]] = {"tiny", "g0"};

    SplitSpec spec;
    spec.train_ratio = 0.2;
    spec.seed = 1;
    SplitResult split = split_dataset(ids, tags, spec);
    CHECK(split.test_only_tasks == std::vector<std::string>{"tiny"});
    CHECK(split.test.count(ids[30]) == 1);
    CHECK(split.test.count(ids[31]) == 1);
    CHECK(split.train.count(ids[30]) == 0);
    CHECK(split.val.count(ids[31]) == 0);

    // A 3-query task splits normally: 1 test, 0 val, 1 train.
    std::vector<std::string> three = numbered("v", 3);
    SplitResult small = split_dataset(three, uniform_tags(three, "t3"), spec);
    CHECK(small.test.size() == 1);
    CHECK(small.val.empty());
    CHECK(small.train.size() == 1);
    CHECK(small.test_only_tasks.empty());
}

TEST_CASE("split input and spec validation") {
    std::vector<std::string> ids = numbered("u", 10);
    ids.push_back("u003");  // duplicate
    SplitSpec spec;
    spec.train_ratio = 0.2;
    CHECK_THROWS_AS(split_dataset(ids, uniform_tags(ids, "t"), spec), std::invalid_argument);

    SplitSpec bad;
    bad.train_ratio = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad.train_ratio = 0.41;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad.train_ratio = 0.4;
    CHECK_NOTHROW(bad.validate());
    bad.val_ratio = 0.2;  // protocol constants are not tunable
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("split survives a save/load round-trip") {
    std::vector<std::string> ids = numbered("u", 40);
    SplitSpec spec;
    spec.train_ratio = 0.1;
    spec.seed = 11;
    SplitResult split = split_dataset(ids, uniform_tags(ids, "t0"), spec);

    const std::string path = "test_split.json";
    save_split(split, path);
    SplitResult back = load_split(path);
    CHECK(back.train == split.train);
    CHECK(back.val == split.val);
    CHECK(back.test == split.test);
    CHECK(back.test_only_tasks == split.test_only_tasks);
    std::remove(path.c_str());
}

TEST_CASE("alignment document sampling is per-task and deterministic") {
    std::vector<std::string> corpus = numbered("d", 7);
    TaskTag tags;
    for (int i = 0; i < 5; ++i) tags.assignment[corpus[i]] = {"ta", "g0"};
    tags.assignment[corpus[5]] = {"tb", "g0"};
    tags.assignment[corpus[6]] = {"tb", "g0"};

    std::vector<std::string> picks = sample_alignment_docs(corpus, tags, 3, 7);
    CHECK(picks.size() == 5);  // 3 from ta, both of tb
    CHECK(std::set<std::string>(picks.begin(), picks.end()).size() == 5);
    int from_tb = 0;
    for (const auto& id : picks) from_tb += tags.of(id).task == "tb" ? 1 : 0;
    CHECK(from_tb == 2);
    CHECK(sample_alignment_docs(corpus, tags, 3, 7) == picks);
    CHECK(sample_alignment_docs(corpus, tags, 3, 8) != picks);

    // Each task's draw is keyed by (seed, task), so dropping one task
    // leaves the other's picks unchanged.
    std::vector<std::string> ta_only(corpus.begin(), corpus.begin() + 5);
    std::vector<std::string> solo = sample_alignment_docs(ta_only, tags, 3, 7);
    std::vector<std::string> ta_picks;
    for (const auto& id : picks)
        if (tags.of(id).task == "ta") ta_picks.push_back(id);
    CHECK(solo == ta_picks);

    CHECK_THROWS_AS(sample_alignment_docs(corpus, tags, 0, 7), std::invalid_argument);
    CHECK_THROWS_AS(sample_alignment_docs({}, tags, 3, 7), std::runtime_error);
}

TEST_CASE("alignment batches pair ids and drop degenerate rows") {
    Eigen::MatrixXd qv(3, 2);
    qv << 3.0, 0.0,
          0.0, 0.0,   // degenerate on the query side
          1.0, 1.0;
    Eigen::MatrixXd dv(3, 3);
    dv << 0.0, 2.0, 0.0,
          1.0, 0.0, 0.0,
          0.0, 0.0, 5.0;
    EmbeddingSet q = EmbeddingSet::create("strong", {"a", "b", "c"}, qv);
    EmbeddingSet d = EmbeddingSet::create("weak", {"c", "a", "b"}, dv);

    int dropped = -1;
    AlignmentBatch batch = build_alignment_batch(q, d, &dropped);
    CHECK(dropped == 1);
    REQUIRE(batch.size() == 2);
    CHECK_NOTHROW(batch.validate());  // rows came out unit-norm
    // Row order follows the query-side ids: a then c.
    CHECK(batch.q_side(0, 0) == doctest::Approx(1.0));
    CHECK(batch.d_side(0, 0) == doctest::Approx(1.0));  // d's row for "a"
    CHECK(batch.d_side(1, 1) == doctest::Approx(1.0));  // d's row for "c"

    EmbeddingSet wrong = EmbeddingSet::create("weak", {"a", "b", "x"}, dv);
    CHECK_THROWS_AS(build_alignment_batch(q, wrong), std::runtime_error);
    EmbeddingSet fewer = EmbeddingSet::create("weak", {"a", "b"}, Eigen::MatrixXd(dv.topRows(2)));
    CHECK_THROWS_AS(build_alignment_batch(q, fewer), std::runtime_error);

    Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(2, 2);
    EmbeddingSet zq = EmbeddingSet::create("strong", {"a", "b"}, zeros);
    EmbeddingSet zd = EmbeddingSet::create("weak", {"a", "b"}, zeros);
    CHECK_THROWS_AS(build_alignment_batch(zq, zd), std::runtime_error);
}

TEST_CASE("the hidden map is a zero-loss adapter on noiseless data") {
    SyntheticSpec spec;
    spec.n_docs = 120;
    spec.n_queries = 30;
    spec.strong_dim = 16;
    spec.weak_dim = 8;
    spec.noise_sigma = 0.0;
    spec.cluster_count = 6;
    spec.seed = 3;
    SyntheticData data = make_synthetic(spec);

    AlignmentBatch batch = build_alignment_batch(data.strong_docs, data.weak_docs);
    Adapter truth{data.ground_truth_map};
    LossValue lv = alignment_loss(truth, batch);
    CHECK(lv.value <= 1e-12);
    CHECK(lv.degenerate_rows == 0);
}

TEST_CASE("identical embedders are a fixed point of alignment training") {
    SyntheticSpec spec;
    spec.n_docs = 40;
    spec.n_queries = 10;
    spec.strong_dim = 12;
    spec.weak_dim = 12;
    spec.noise_sigma = 0.05;
    spec.cluster_count = 5;
    spec.seed = 4;
    SyntheticData data = make_synthetic(spec);

    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.weight_decay = 0.0;
    cfg.batch_size = 16;
    cfg.max_epochs = 3;
    cfg.seed = 4;
    // Same set on both sides: the identity-like init is already optimal,
    // so the first epoch's loss is pure rounding noise. AdamW cannot sit
    // bit-exactly at an optimum (eps-normalized updates amplify rounding
    // noise into jitter of amplitude ~lr), so the later bounds allow it.
    TrainResult res = run_alignment_stage(data.strong_docs, data.strong_docs, cfg);
    CHECK(std::abs(res.report.epochs.front().train_loss) <= 1e-12);
    CHECK(res.report.epochs.back().train_loss <= 1e-5);
    CHECK((res.adapter.weights - Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff() <
          10.0 * cfg.learning_rate);
}

TEST_CASE("alignment training reduces the loss on a noisy corpus") {
    SyntheticSpec spec;
    spec.n_docs = 200;
    spec.n_queries = 20;
    spec.strong_dim = 16;
    spec.weak_dim = 8;
    spec.noise_sigma = 0.02;
    spec.cluster_count = 8;
    spec.seed = 5;
    SyntheticData data = make_synthetic(spec);

    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.weight_decay = 1e-2;
    cfg.batch_size = 32;
    cfg.max_epochs = 100;
    cfg.seed = 5;
    TrainResult res = run_alignment_stage(data.strong_docs, data.weak_docs, cfg);
    CHECK(res.report.stop_epoch == 100);
    CHECK(!res.report.best_epoch.has_value());
    CHECK(res.report.epochs.front().train_loss > res.report.epochs.back().train_loss);
    CHECK(res.report.epochs.back().train_loss < 0.1);

    EmbeddingSet mismatched = data.weak_docs.subset(
        std::vector<std::string>(data.weak_docs.ids.begin(), data.weak_docs.ids.end() - 1));
    CHECK_THROWS_AS(run_alignment_stage(data.strong_docs, mismatched, cfg), std::runtime_error);
}

TEST_CASE("contrastive batches take the best positive and the mined negatives") {
    Eigen::MatrixXd dv(4, 3);
    dv << 1.0, 0.0, 0.0,
          0.0, 1.0, 0.0,
          0.0, 0.0, 1.0,
          0.5, 0.5, 0.0;
    EmbeddingSet docs = EmbeddingSet::create("weak", {"a", "b", "c", "d"}, dv);
    Eigen::MatrixXd qv(2, 2);
    qv << 1.0, 0.0,
          0.0, 1.0;
    EmbeddingSet queries = EmbeddingSet::create("strong", {"q1", "q2"}, qv);

    RelevanceJudgments qrels;
    qrels.entries["q1"] = {{"a", 1}, {"b", 2}};  // highest grade wins: b
    qrels.entries["q2"] = {{"a", 2}, {"b", 2}};  // grade tie: first id wins: a

    NegativeSet negs;
    negs.params.k = 2;
    negs.per_query["q1"] = {"c", "d"};
    negs.per_query["q2"] = {"d", "c"};

    ContrastiveBatch batch = build_contrastive_batch({"q1", "q2"}, queries, docs, qrels, negs);
    REQUIRE(batch.size() == 2);
    CHECK(batch.k == 2);
    CHECK(batch.positives.row(0) == docs.row("b"));
    CHECK(batch.positives.row(1) == docs.row("a"));
    CHECK(batch.negatives.row(0) == docs.row("c"));
    CHECK(batch.negatives.row(1) == docs.row("d"));
    CHECK(batch.negatives.row(2) == docs.row("d"));
    CHECK(batch.negatives.row(3) == docs.row("c"));
    CHECK(batch.queries.row(0) == queries.row("q1"));

    CHECK_THROWS_AS(build_contrastive_batch({}, queries, docs, qrels, negs),
                    std::invalid_argument);
    NegativeSet missing = negs;
    missing.per_query.erase("q2");
    CHECK_THROWS_AS(build_contrastive_batch({"q1", "q2"}, queries, docs, qrels, missing),
                    std::runtime_error);
    NegativeSet uneven = negs;
    uneven.per_query["q2"] = {"d"};
    CHECK_THROWS_AS(build_contrastive_batch({"q1", "q2"}, queries, docs, qrels, uneven),
                    std::runtime_error);
    RelevanceJudgments no_positive;
    no_positive.entries["q1"] = {{"a", 0}};
    no_positive.entries["q2"] = qrels.entries["q2"];
    CHECK_THROWS_AS(build_contrastive_batch({"q1", "q2"}, queries, docs, no_positive, negs),
                    std::runtime_error);
}

TEST_CASE("adaptation training descends under both losses") {
    SyntheticSpec spec;
    spec.n_docs = 60;
    spec.n_queries = 20;
    spec.strong_dim = 12;
    spec.weak_dim = 6;
    spec.noise_sigma = 0.05;
    spec.cluster_count = 6;
    spec.seed = 9;
    SyntheticData data = make_synthetic(spec);

    NegativeSet negs = mine_random(data.strong_docs.ids, data.qrels, 3, 9);
    ContrastiveBatch batch = build_contrastive_batch(data.strong_queries.ids,
                                                     data.strong_queries, data.weak_docs,
                                                     data.qrels, negs);
    Adapter init = init_adapter(12, 6, InitScheme::scaled_random, 9);

    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.weight_decay = 0.0;
    cfg.batch_size = 8;
    cfg.max_epochs = 30;
    cfg.temperature = 0.05;
    cfg.seed = 9;

    TrainResult nce = run_adaptation_stage(init, batch, nullptr, cfg, AdaptLoss::infonce);
    CHECK(nce.report.epochs.front().train_loss > nce.report.epochs.back().train_loss);

    TrainResult trip = run_adaptation_stage(init, batch, nullptr, cfg, AdaptLoss::triplet, 0.2);
    CHECK(trip.report.epochs.front().train_loss >= trip.report.epochs.back().train_loss);

    TrainConfig impatient = cfg;
    impatient.patience = 3;  // patience without a validation batch
    CHECK_THROWS_AS(run_adaptation_stage(init, batch, nullptr, impatient),
                    std::invalid_argument);

    CHECK(adapt_loss_from_string("infonce") == AdaptLoss::infonce);
    CHECK(adapt_loss_from_string(to_string(AdaptLoss::triplet)) == AdaptLoss::triplet);
    CHECK_THROWS_AS(adapt_loss_from_string("hinge"), std::invalid_argument);
}

TEST_CASE("synthetic corpora are deterministic in the seed") {
    SyntheticSpec spec;
    spec.n_docs = 50;
    spec.n_queries = 10;
    spec.strong_dim = 10;
    spec.weak_dim = 5;
    spec.cluster_count = 5;
    spec.seed = 21;

    SyntheticData a = make_synthetic(spec);
    SyntheticData b = make_synthetic(spec);
    CHECK(a.strong_docs.vectors == b.strong_docs.vectors);
    CHECK(a.weak_queries.vectors == b.weak_queries.vectors);
    CHECK(a.ground_truth_map == b.ground_truth_map);
    CHECK(a.qrels.entries == b.qrels.entries);

    spec.seed = 22;
    SyntheticData c = make_synthetic(spec);
    CHECK(a.strong_docs.vectors != c.strong_docs.vectors);

    CHECK(a.strong_docs.ids[0] == "d00000");
    CHECK(a.strong_queries.ids[9] == "q00009");
    CHECK(a.weak_docs.ids == a.strong_docs.ids);
    CHECK(a.strong_docs.dim() == 10);
    CHECK(a.weak_docs.dim() == 5);
    // Hidden map has orthonormal columns.
    Eigen::MatrixXd gram = a.ground_truth_map.transpose() * a.ground_truth_map;
    CHECK((gram - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-12);
    // Each query is judged against exactly its one positive document.
    CHECK(a.qrels.entries.size() == 10);
    CHECK(a.qrels.entries.at("q00003").at("d00003") == 1);
}

TEST_CASE("near-duplicates are unjudged corpus bait") {
    SyntheticSpec spec;
    spec.n_docs = 10;
    spec.n_queries = 4;
    spec.strong_dim = 16;
    spec.weak_dim = 8;
    spec.noise_sigma = 0.02;
    spec.cluster_count = 5;
    spec.seed = 2;
    spec.near_dups_per_positive = 2;
    spec.near_dup_sigma = 0.01;
    SyntheticData data = make_synthetic(spec);

    // 4 queries target docs 0..3, each contributing 2 duplicates.
    CHECK(data.strong_docs.size() == 18);
    CHECK(data.weak_docs.size() == 18);
    CHECK(data.strong_docs.has("d00003-dup1"));
    CHECK(!data.strong_docs.has("d00004-dup0"));  // unjudged docs get none

    // Duplicates hug their source but are never judged.
    double sim = cosine_sim(data.strong_docs.row("d00000-dup0").transpose(),
                            data.strong_docs.row("d00000").transpose());
    CHECK(sim > 0.99);
    CHECK(!data.qrels.is_positive("q00000", "d00000-dup0"));
    for (const auto& [qid, judged] : data.qrels.entries)
        for (const auto& [did, grade] : judged) CHECK(did.find("-dup") == std::string::npos);

    // Tags cover the duplicates, matching their source document.
    CHECK(data.tags.of("d00000-dup1").task == data.tags.of("d00000").task);
    CHECK(data.tags.of("q00001").task == data.tags.of("d00001").task);
}

TEST_CASE("task_count groups clusters into coarser tasks") {
    SyntheticSpec spec;
    spec.n_docs = 16;
    spec.n_queries = 4;
    spec.strong_dim = 8;
    spec.weak_dim = 4;
    spec.cluster_count = 8;
    spec.seed = 6;

    SyntheticData fine = make_synthetic(spec);  // one task per cluster
    CHECK(fine.tags.of("d00000").task != fine.tags.of("d00004").task);

    spec.task_count = 4;
    SyntheticData coarse = make_synthetic(spec);
    CHECK(coarse.tags.of("d00000").task == coarse.tags.of("d00004").task);  // clusters 0 and 4
    CHECK(coarse.tags.of("d00000").task != coarse.tags.of("d00001").task);
    std::set<std::string> tasks;
    for (const auto& [id, where] : coarse.tags.assignment) tasks.insert(where.task);
    CHECK(tasks.size() == 4);
}

TEST_CASE("query_shift moves queries without touching documents") {
    SyntheticSpec spec;
    spec.n_docs = 30;
    spec.n_queries = 10;
    spec.strong_dim = 12;
    spec.weak_dim = 6;
    spec.noise_sigma = 0.02;
    spec.cluster_count = 6;
    spec.seed = 8;

    SyntheticData plain = make_synthetic(spec);
    spec.query_shift = 0.45;
    SyntheticData shifted = make_synthetic(spec);

    CHECK(plain.strong_docs.vectors == shifted.strong_docs.vectors);
    CHECK(plain.weak_docs.vectors == shifted.weak_docs.vectors);
    CHECK(plain.qrels.entries == shifted.qrels.entries);
    CHECK(plain.strong_queries.vectors != shifted.strong_queries.vectors);
}

TEST_CASE("noiseless identity-map corpus makes zero-shot retrieval perfect") {
    SyntheticSpec spec;
    spec.n_docs = 16;
    spec.n_queries = 8;
    spec.strong_dim = 16;
    spec.weak_dim = 16;
    spec.noise_sigma = 0.0;
    spec.cluster_count = 16;  // every document is its own orthonormal center
    spec.seed = 12;
    spec.use_identity_map = true;
    SyntheticData data = make_synthetic(spec);

    RetrievalRun run = retrieve_topk(data.weak_queries, data.weak_docs, nullptr, 10);
    MetricsReport rep = evaluate_run(run, data.qrels, data.tags);
    CHECK(rep.overall.ndcg_at_10 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.overall.recall_at_100 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.excluded_queries.empty());
}

TEST_CASE("synthetic spec validation") {
    SyntheticSpec spec;
    spec.weak_dim = 128;  // wider than strong_dim
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec = SyntheticSpec{};
    spec.cluster_count = 5000;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec = SyntheticSpec{};
    spec.task_count = 21;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec = SyntheticSpec{};
    spec.use_identity_map = true;  // dims differ
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec = SyntheticSpec{};
    spec.noise_sigma = -0.1;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    CHECK_NOTHROW(SyntheticSpec{}.validate());
}
