#pragma once

#include "era/adapter.hpp"
#include "era/embedding_store.hpp"
#include "era/losses.hpp"
#include "era/negative_mining.hpp"
#include "era/optimizer.hpp"

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace era {

// Query split protocol. Validation and test membership depend only on
// (seed, query id), never on train_ratio, so raising the ratio grows the
// train set without touching the other two.
struct SplitSpec {
    double train_ratio = 0.05;  // in (0, 0.4]
    double val_ratio = 0.10;    // fixed by protocol
    double test_ratio = 0.50;   // fixed by protocol
    uint64_t seed = 0;

    void validate() const;
};

struct SplitResult {
    std::set<std::string> train;
    std::set<std::string> val;
    std::set<std::string> test;
    std::vector<std::string> test_only_tasks;  // tasks with fewer than 3 queries
};

// Within each task, ids are ordered by a keyed hash of (seed, id); the
// first half of that order is test, the next tenth is val, and the first
// ceil(train_ratio * n) ids of the remainder are train. Leftover ids are
// unused. Tasks with fewer than 3 queries go entirely to test and are
// reported.
SplitResult split_dataset(const std::vector<std::string>& query_ids, const TaskTag& tags,
                          const SplitSpec& spec);

// JSON file with the four membership lists.
void save_split(const SplitResult& split, const std::string& path);
SplitResult load_split(const std::string& path);

// Uniform without-replacement sample of min(per_task, task size) document
// ids per task, deterministic from (seed, task). Relevance labels are
// ignored: documents are unlabeled for the alignment stage.
std::vector<std::string> sample_alignment_docs(const std::vector<std::string>& corpus_ids,
                                               const TaskTag& tags, int per_task, uint64_t seed);

// Paired unit-normalized batch over the ids shared by the two sets, which
// must be identical as sets. Degenerate rows are dropped and counted.
AlignmentBatch build_alignment_batch(const EmbeddingSet& q_embeds, const EmbeddingSet& d_embeds,
                                     int* dropped = nullptr);

// Self-supervised alignment: fits the adapter so the query embedder's view
// of a document lands on the document embedder's view of it. Identity-like
// init when dims agree, scaled-random otherwise.
TrainResult run_alignment_stage(const EmbeddingSet& q_embeds, const EmbeddingSet& d_embeds,
                                const TrainConfig& cfg);

// One contrastive example per listed query: its highest-grade positive
// (ties by ascending doc id) and the mined negatives, which must share one
// length across queries.
ContrastiveBatch build_contrastive_batch(const std::vector<std::string>& query_ids,
                                         const EmbeddingSet& queries, const EmbeddingSet& docs,
                                         const RelevanceJudgments& qrels,
                                         const NegativeSet& negatives);

enum class AdaptLoss { infonce, triplet };

AdaptLoss adapt_loss_from_string(const std::string& s);
std::string to_string(AdaptLoss loss);

// Label-based contrastive stage starting from an existing adapter (the
// alignment output, or a fresh random init for the adaptation-only
// baseline). val may be null only when cfg.patience is unset.
TrainResult run_adaptation_stage(const Adapter& init, const ContrastiveBatch& train,
                                 const ContrastiveBatch* val, const TrainConfig& cfg,
                                 AdaptLoss loss = AdaptLoss::infonce, double margin = 0.2);

}  // namespace era
