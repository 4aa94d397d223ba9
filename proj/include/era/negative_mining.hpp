#pragma once

#include "era/embedding_store.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace era {

enum class MiningStrategy { topk_percpos, naive_topk, random };

MiningStrategy mining_strategy_from_string(const std::string& s);
std::string to_string(MiningStrategy s);

// Parameters recorded with a mined set; only the fields relevant to the
// strategy are populated (and serialized).
struct MiningParams {
    int k = 0;
    std::optional<int> pool_size;
    std::optional<double> perc;
    std::optional<uint64_t> seed;
};

struct NegativeSet {
    std::map<std::string, std::vector<std::string>> per_query;
    MiningStrategy strategy = MiningStrategy::topk_percpos;
    MiningParams params;

    // Invariants: no listed negative is a positive of its query, list
    // lengths stay within params.k, and (when a corpus is supplied) every
    // id exists in it. Throws std::invalid_argument.
    void validate(const RelevanceJudgments& qrels, const EmbeddingSet* docs = nullptr) const;
};

// Artifact defaults; k = 5 is the best-performing negative count.
inline constexpr int kDefaultPoolSize = 100;
inline constexpr double kDefaultPerc = 0.95;
inline constexpr int kDefaultNegatives = 5;

// Fallback used to score a positive document that does not appear in the
// run's ranking for its query.
using PairScorer = std::function<double(const std::string& query_id, const std::string& doc_id)>;

// Hard negatives with a false-negative guard: from the top pool_size run
// entries (positives removed), discard candidates scoring >= perc times
// the query's best positive score, keep the top k survivors, and backfill
// any shortfall with deterministic random non-positives keyed by
// (seed, query id).
NegativeSet mine_topk_percpos(const RetrievalRun& run, const RelevanceJudgments& qrels,
                              const std::vector<std::string>& corpus_ids, int pool_size,
                              double perc, int k, uint64_t seed,
                              const PairScorer* positive_scorer = nullptr);

// Top k non-positive run entries per query, by descending score.
NegativeSet mine_naive_topk(const RetrievalRun& run, const RelevanceJudgments& qrels, int k);

// k uniform non-positive documents per query, without replacement,
// deterministic from (seed, query id).
NegativeSet mine_random(const std::vector<std::string>& corpus_ids,
                        const RelevanceJudgments& qrels, int k, uint64_t seed);

// JSON lines, one {query_id, strategy, params, negatives} object per query.
void save_negatives(const NegativeSet& set, const std::string& path);
NegativeSet load_negatives(const std::string& path);

}  // namespace era
