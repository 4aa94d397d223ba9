#include "era/pipeline.hpp"

#include "era/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

namespace era {

void SplitSpec::validate() const {
    if (!(train_ratio > 0.0 && train_ratio <= 0.4))
        throw std::invalid_argument("train_ratio must be in (0, 0.4]");
    if (val_ratio != 0.10 || test_ratio != 0.50)
        throw std::invalid_argument("val_ratio and test_ratio are fixed at 0.10 and 0.50");
    if (train_ratio + val_ratio + test_ratio > 1.0 + 1e-12)
        throw std::invalid_argument("split ratios exceed 1.0");
}

namespace {

// Integer count for ratio * n, robust to the ratio not being exactly
// representable (0.05 * 100 must give 5, not 6).
size_t ceil_count(double ratio, size_t n) {
    return static_cast<size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
}

std::map<std::string, std::vector<std::string>> by_task(const std::vector<std::string>& ids,
                                                        const TaskTag& tags) {
    std::map<std::string, std::vector<std::string>> tasks;
    for (const auto& id : ids) tasks[tags.of(id).task].push_back(id);
    return tasks;
}

}  // namespace

SplitResult split_dataset(const std::vector<std::string>& query_ids, const TaskTag& tags,
                          const SplitSpec& spec) {
    spec.validate();
    {
        std::set<std::string> unique(query_ids.begin(), query_ids.end());
        if (unique.size() != query_ids.size())
            throw std::invalid_argument("duplicate query ids in split input");
    }

    SplitResult result;
    for (auto& [task, ids] : by_task(query_ids, tags)) {
        if (ids.size() < 3) {
            result.test_only_tasks.push_back(task);
            result.test.insert(ids.begin(), ids.end());
            continue;
        }
        // Keyed-hash order: a function of (seed, id) only, so membership in
        // the leading test/val blocks never depends on train_ratio.
        std::sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
            uint64_t ha = rng::mix(rng::mix(spec.seed, "split-order"), a);
            uint64_t hb = rng::mix(rng::mix(spec.seed, "split-order"), b);
            if (ha != hb) return ha < hb;
            return a < b;
        });
        size_t n = ids.size();
        size_t n_test = n / 2;
        size_t n_val = n / 10;
        size_t n_train = std::min(ceil_count(spec.train_ratio, n), n - n_test - n_val);
        for (size_t i = 0; i < n_test; ++i) result.test.insert(ids[i]);
        for (size_t i = n_test; i < n_test + n_val; ++i) result.val.insert(ids[i]);
        for (size_t i = n_test + n_val; i < n_test + n_val + n_train; ++i)
            result.train.insert(ids[i]);
    }
    return result;
}

void save_split(const SplitResult& split, const std::string& path) {
    nlohmann::json j;
    j["train"] = split.train;
    j["val"] = split.val;
    j["test"] = split.test;
    j["test_only_tasks"] = split.test_only_tasks;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

SplitResult load_split(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    SplitResult split;
    split.train = j.at("train").get<std::set<std::string>>();
    split.val = j.at("val").get<std::set<std::string>>();
    split.test = j.at("test").get<std::set<std::string>>();
    split.test_only_tasks = j.at("test_only_tasks").get<std::vector<std::string>>();
    return split;
}

std::vector<std::string> sample_alignment_docs(const std::vector<std::string>& corpus_ids,
                                               const TaskTag& tags, int per_task, uint64_t seed) {
    if (per_task < 1) throw std::invalid_argument("per_task must be >= 1");
    if (corpus_ids.empty()) throw std::runtime_error("empty corpus");

    std::vector<std::string> out;
    for (const auto& [task, ids] : by_task(corpus_ids, tags)) {
        rng::Stream stream(rng::mix(rng::mix(seed, "alignment-sample"), task));
        size_t want = std::min(ids.size(), static_cast<size_t>(per_task));
        for (size_t i : rng::sample_without_replacement(ids.size(), want, stream))
            out.push_back(ids[i]);
    }
    return out;
}

AlignmentBatch build_alignment_batch(const EmbeddingSet& q_embeds, const EmbeddingSet& d_embeds,
                                     int* dropped) {
    if (q_embeds.size() != d_embeds.size())
        throw std::runtime_error("alignment id mismatch: " + std::to_string(q_embeds.size()) +
                                 " vs " + std::to_string(d_embeds.size()) + " ids");
    for (const auto& id : q_embeds.ids)
        if (!d_embeds.has(id)) throw std::runtime_error("alignment id mismatch: " + id);

    AlignmentBatch batch;
    batch.q_side.resize(q_embeds.size(), q_embeds.dim());
    batch.d_side.resize(q_embeds.size(), d_embeds.dim());
    Eigen::Index row = 0;
    int skipped = 0;
    for (const auto& id : q_embeds.ids) {
        bool bad_q = false, bad_d = false;
        Eigen::VectorXd q = l2_normalize(q_embeds.row(id).transpose(), &bad_q);
        Eigen::VectorXd d = l2_normalize(d_embeds.row(id).transpose(), &bad_d);
        if (bad_q || bad_d) {
            ++skipped;
            continue;
        }
        batch.q_side.row(row) = q.transpose();
        batch.d_side.row(row) = d.transpose();
        ++row;
    }
    batch.q_side.conservativeResize(row, Eigen::NoChange);
    batch.d_side.conservativeResize(row, Eigen::NoChange);
    if (dropped != nullptr) *dropped = skipped;
    if (row == 0) throw std::runtime_error("no usable alignment pairs");
    return batch;
}

TrainResult run_alignment_stage(const EmbeddingSet& q_embeds, const EmbeddingSet& d_embeds,
                                const TrainConfig& cfg) {
    AlignmentBatch batch = build_alignment_batch(q_embeds, d_embeds);
    InitScheme scheme = q_embeds.dim() == d_embeds.dim() ? InitScheme::identity_like
                                                         : InitScheme::scaled_random;
    Adapter init = init_adapter(q_embeds.dim(), d_embeds.dim(), scheme, cfg.seed);
    BatchLossFn loss = [&batch](const Adapter& a, const std::vector<size_t>& rows) {
        return alignment_loss(a, batch.subset(rows));
    };
    return train_loop(init, static_cast<size_t>(batch.size()), loss, cfg);
}

ContrastiveBatch build_contrastive_batch(const std::vector<std::string>& query_ids,
                                         const EmbeddingSet& queries, const EmbeddingSet& docs,
                                         const RelevanceJudgments& qrels,
                                         const NegativeSet& negatives) {
    if (query_ids.empty()) throw std::invalid_argument("no queries for contrastive batch");

    int k = -1;
    for (const auto& qid : query_ids) {
        auto it = negatives.per_query.find(qid);
        if (it == negatives.per_query.end() || it->second.empty())
            throw std::runtime_error("no mined negatives for query " + qid);
        if (k < 0) k = static_cast<int>(it->second.size());
        else if (k != static_cast<int>(it->second.size()))
            throw std::runtime_error("negative count differs across queries (need constant k)");
    }

    ContrastiveBatch batch;
    batch.k = k;
    batch.queries.resize(static_cast<Eigen::Index>(query_ids.size()), queries.dim());
    batch.positives.resize(static_cast<Eigen::Index>(query_ids.size()), docs.dim());
    batch.negatives.resize(static_cast<Eigen::Index>(query_ids.size() * static_cast<size_t>(k)),
                           docs.dim());
    Eigen::Index row = 0;
    for (const auto& qid : query_ids) {
        // Positive = highest grade, ties to the lexicographically first id.
        std::string best;
        int best_grade = 0;
        auto jt = qrels.entries.find(qid);
        if (jt != qrels.entries.end())
            for (const auto& [did, grade] : jt->second)
                if (grade > best_grade) { best = did; best_grade = grade; }
        if (best_grade <= 0) throw std::runtime_error("query " + qid + " has no positive");

        batch.queries.row(row) = queries.row(qid);
        batch.positives.row(row) = docs.row(best);
        const auto& negs = negatives.per_query.at(qid);
        for (int j = 0; j < k; ++j)
            batch.negatives.row(row * k + j) = docs.row(negs[static_cast<size_t>(j)]);
        ++row;
    }
    return batch;
}

AdaptLoss adapt_loss_from_string(const std::string& s) {
    if (s == "infonce") return AdaptLoss::infonce;
    if (s == "triplet") return AdaptLoss::triplet;
    throw std::invalid_argument("unknown adaptation loss: " + s);
}

std::string to_string(AdaptLoss loss) {
    switch (loss) {
        case AdaptLoss::infonce: return "infonce";
        case AdaptLoss::triplet: return "triplet";
    }
    throw std::invalid_argument("unknown adaptation loss value");
}

TrainResult run_adaptation_stage(const Adapter& init, const ContrastiveBatch& train,
                                 const ContrastiveBatch* val, const TrainConfig& cfg,
                                 AdaptLoss loss, double margin) {
    train.validate();
    auto eval = [loss, margin, &cfg](const Adapter& a, const ContrastiveBatch& b) {
        return loss == AdaptLoss::infonce ? infonce_loss(a, b, cfg.temperature)
                                          : triplet_loss(a, b, margin);
    };
    BatchLossFn batch_loss = [&train, eval](const Adapter& a, const std::vector<size_t>& rows) {
        return eval(a, train.subset(rows));
    };
    if (val == nullptr) return train_loop(init, static_cast<size_t>(train.size()), batch_loss, cfg);
    val->validate();
    ValLossFn val_loss = [val, eval](const Adapter& a) { return eval(a, *val).value; };
    return train_loop(init, static_cast<size_t>(train.size()), batch_loss, cfg, &val_loss);
}

}  // namespace era
