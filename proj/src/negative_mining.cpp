#include "era/negative_mining.hpp"

#include "era/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

namespace era {

using nlohmann::json;

MiningStrategy mining_strategy_from_string(const std::string& s) {
    if (s == "topk_percpos") return MiningStrategy::topk_percpos;
    if (s == "naive_topk") return MiningStrategy::naive_topk;
    if (s == "random") return MiningStrategy::random;
    throw std::invalid_argument("unknown mining strategy: " + s);
}

std::string to_string(MiningStrategy s) {
    switch (s) {
        case MiningStrategy::topk_percpos: return "topk_percpos";
        case MiningStrategy::naive_topk: return "naive_topk";
        case MiningStrategy::random: return "random";
    }
    throw std::invalid_argument("unknown mining strategy value");
}

void NegativeSet::validate(const RelevanceJudgments& qrels, const EmbeddingSet* docs) const {
    for (const auto& [qid, negs] : per_query) {
        if (params.k > 0 && negs.size() > static_cast<size_t>(params.k))
            throw std::invalid_argument("negative list for query " + qid + " exceeds k");
        std::set<std::string> seen;
        for (const auto& did : negs) {
            if (qrels.is_positive(qid, did))
                throw std::invalid_argument("positive document " + did +
                                            " listed as negative for query " + qid);
            if (!seen.insert(did).second)
                throw std::invalid_argument("duplicate negative " + did + " for query " + qid);
            if (docs != nullptr && !docs->has(did))
                throw std::invalid_argument("negative " + did + " missing from document set");
        }
    }
}

namespace {

const std::vector<std::pair<std::string, double>>& ranking_of(const RetrievalRun& run,
                                                              const std::string& qid) {
    auto it = run.rankings.find(qid);
    if (it == run.rankings.end())
        throw std::runtime_error("query absent from run: " + qid);
    return it->second;
}

// Deterministic sample from eligible ids (corpus order), keyed per query.
std::vector<std::string> sample_ids(const std::vector<std::string>& eligible, size_t count,
                                    uint64_t stream_seed) {
    rng::Stream stream(stream_seed);
    auto picks = rng::sample_without_replacement(eligible.size(), count, stream);
    std::vector<std::string> out;
    out.reserve(picks.size());
    for (size_t i : picks) out.push_back(eligible[i]);
    return out;
}

}  // namespace

NegativeSet mine_topk_percpos(const RetrievalRun& run, const RelevanceJudgments& qrels,
                              const std::vector<std::string>& corpus_ids, int pool_size,
                              double perc, int k, uint64_t seed,
                              const PairScorer* positive_scorer) {
    if (pool_size < 1) throw std::invalid_argument("pool_size must be >= 1");
    if (!(perc > 0.0 && perc <= 1.0)) throw std::invalid_argument("perc must be in (0, 1]");
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (corpus_ids.empty()) throw std::runtime_error("empty corpus");

    NegativeSet out;
    out.strategy = MiningStrategy::topk_percpos;
    out.params = {k, pool_size, perc, seed};

    for (const auto& [qid, judged] : qrels.entries) {
        const auto& ranking = ranking_of(run, qid);

        // Best positive score, from the run when possible.
        double positive_score = -std::numeric_limits<double>::infinity();
        bool found_in_run = false;
        for (const auto& [did, score] : ranking) {
            if (qrels.is_positive(qid, did)) {
                positive_score = std::max(positive_score, score);
                found_in_run = true;
            }
        }
        if (!found_in_run) {
            if (positive_scorer == nullptr)
                throw std::runtime_error("no positive of query " + qid +
                                         " appears in the run and no scorer was supplied");
            for (const auto& [did, grade] : judged)
                if (grade > 0)
                    positive_score = std::max(positive_score, (*positive_scorer)(qid, did));
        }

        const double threshold = perc * positive_score;
        std::vector<std::string> negs;
        size_t pool_end = std::min(ranking.size(), static_cast<size_t>(pool_size));
        for (size_t i = 0; i < pool_end && negs.size() < static_cast<size_t>(k); ++i) {
            const auto& [did, score] = ranking[i];
            if (qrels.is_positive(qid, did)) continue;
            if (score >= threshold) continue;  // false-negative guard
            negs.push_back(did);
        }

        if (negs.size() < static_cast<size_t>(k)) {
            std::set<std::string> taken(negs.begin(), negs.end());
            std::vector<std::string> eligible;
            for (const auto& did : corpus_ids)
                if (!qrels.is_positive(qid, did) && taken.count(did) == 0)
                    eligible.push_back(did);
            size_t want = std::min(eligible.size(), static_cast<size_t>(k) - negs.size());
            for (auto& did :
                 sample_ids(eligible, want, rng::mix(rng::mix(seed, "negative-backfill"), qid)))
                negs.push_back(std::move(did));
        }
        out.per_query[qid] = std::move(negs);
    }
    return out;
}

NegativeSet mine_naive_topk(const RetrievalRun& run, const RelevanceJudgments& qrels, int k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    NegativeSet out;
    out.strategy = MiningStrategy::naive_topk;
    out.params.k = k;
    for (const auto& [qid, judged] : qrels.entries) {
        (void)judged;
        std::vector<std::string> negs;
        for (const auto& [did, score] : ranking_of(run, qid)) {
            (void)score;
            if (qrels.is_positive(qid, did)) continue;
            negs.push_back(did);
            if (negs.size() == static_cast<size_t>(k)) break;
        }
        out.per_query[qid] = std::move(negs);
    }
    return out;
}

NegativeSet mine_random(const std::vector<std::string>& corpus_ids,
                        const RelevanceJudgments& qrels, int k, uint64_t seed) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (corpus_ids.empty()) throw std::runtime_error("empty corpus");
    NegativeSet out;
    out.strategy = MiningStrategy::random;
    out.params.k = k;
    out.params.seed = seed;
    for (const auto& [qid, judged] : qrels.entries) {
        (void)judged;
        std::vector<std::string> eligible;
        for (const auto& did : corpus_ids)
            if (!qrels.is_positive(qid, did)) eligible.push_back(did);
        if (eligible.size() < static_cast<size_t>(k))
            throw std::runtime_error("insufficient corpus: query " + qid + " has " +
                                     std::to_string(eligible.size()) +
                                     " non-positive documents, need " + std::to_string(k));
        out.per_query[qid] = sample_ids(eligible, static_cast<size_t>(k),
                                        rng::mix(rng::mix(seed, "mine-random"), qid));
    }
    return out;
}

void save_negatives(const NegativeSet& set, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    json params = json::object();
    params["k"] = set.params.k;
    if (set.params.pool_size) params["pool_size"] = *set.params.pool_size;
    if (set.params.perc) params["perc"] = *set.params.perc;
    if (set.params.seed) params["seed"] = *set.params.seed;
    for (const auto& [qid, negs] : set.per_query) {
        json line = {{"query_id", qid},
                     {"strategy", to_string(set.strategy)},
                     {"params", params},
                     {"negatives", negs}};
        out << line.dump() << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

NegativeSet load_negatives(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    NegativeSet set;
    std::string line;
    size_t lineno = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        MiningStrategy strategy = mining_strategy_from_string(j.at("strategy").get<std::string>());
        MiningParams params;
        const json& p = j.at("params");
        params.k = p.at("k").get<int>();
        if (p.contains("pool_size")) params.pool_size = p["pool_size"].get<int>();
        if (p.contains("perc")) params.perc = p["perc"].get<double>();
        if (p.contains("seed")) params.seed = p["seed"].get<uint64_t>();
        if (first) {
            set.strategy = strategy;
            set.params = params;
            first = false;
        } else if (strategy != set.strategy || params.k != set.params.k) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": inconsistent strategy across lines");
        }
        std::string qid = j.at("query_id").get<std::string>();
        if (set.per_query.count(qid) != 0)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": duplicate query id " + qid);
        set.per_query[qid] = j.at("negatives").get<std::vector<std::string>>();
    }
    return set;
}

}  // namespace era
