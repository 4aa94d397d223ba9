#include "era/retrieval.hpp"

#include <algorithm>
#include <stdexcept>

namespace era {

RetrievalRun retrieve_topk(const EmbeddingSet& queries, const EmbeddingSet& docs,
                           const Adapter* adapter, int k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (docs.size() == 0) throw std::invalid_argument("empty document set");
    if (adapter != nullptr) {
        if (adapter->query_dim() != queries.dim() || adapter->doc_dim() != docs.dim())
            throw std::invalid_argument("adapter dims do not match embedding sets");
    } else if (queries.dim() != docs.dim()) {
        throw std::invalid_argument("query/document dimension mismatch in zero-shot mode");
    }

    Eigen::VectorXd doc_norms = docs.vectors.rowwise().norm();

    RetrievalRun run;
    size_t cut = std::min(static_cast<size_t>(k), static_cast<size_t>(docs.size()));
    for (Eigen::Index qi = 0; qi < queries.size(); ++qi) {
        Eigen::VectorXd q = queries.vectors.row(qi).transpose();
        bool degenerate = false;
        Eigen::VectorXd u = adapter != nullptr ? apply_adapter(*adapter, q, &degenerate)
                                               : l2_normalize(q, &degenerate);
        Eigen::VectorXd raw = docs.vectors * u;

        std::vector<Eigen::Index> order(static_cast<size_t>(docs.size()));
        std::vector<double> score(order.size());
        for (size_t di = 0; di < order.size(); ++di) {
            order[di] = static_cast<Eigen::Index>(di);
            score[di] = (degenerate || doc_norms[static_cast<Eigen::Index>(di)] <= kNormEpsilon)
                            ? 0.0
                            : raw[static_cast<Eigen::Index>(di)] /
                                  doc_norms[static_cast<Eigen::Index>(di)];
        }
        auto better = [&](Eigen::Index a, Eigen::Index b) {
            size_t sa = static_cast<size_t>(a), sb = static_cast<size_t>(b);
            if (score[sa] != score[sb]) return score[sa] > score[sb];
            return docs.ids[sa] < docs.ids[sb];
        };
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut),
                          order.end(), better);

        auto& ranking = run.rankings[queries.ids[static_cast<size_t>(qi)]];
        ranking.reserve(cut);
        for (size_t r = 0; r < cut; ++r)
            ranking.emplace_back(docs.ids[static_cast<size_t>(order[r])],
                                 score[static_cast<size_t>(order[r])]);
    }
    return run;
}

}  // namespace era
