#pragma once

#include "era/adapter.hpp"
#include "era/embedding_store.hpp"

namespace era {

// Exhaustive top-k cosine retrieval. With an adapter, query vectors are
// mapped through it first (asymmetric mode); without one, query and
// document dims must already agree (zero-shot mode). Ties break by
// ascending document id. Degenerate vectors score 0.
RetrievalRun retrieve_topk(const EmbeddingSet& queries, const EmbeddingSet& docs,
                           const Adapter* adapter, int k);

}  // namespace era
