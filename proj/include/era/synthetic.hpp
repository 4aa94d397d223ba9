#pragma once

#include "era/embedding_store.hpp"

#include <Eigen/Dense>

#include <cstdint>

namespace era {

// Desk-scale synthetic retrieval world with a strong embedder (documents
// and queries in strong_dim) and a weak embedder (the same content pushed
// through a hidden orthonormal map into weak_dim, with extra noise). The
// weak embedder is mildly noisy on documents and heavily noisy on
// queries; see noise_sigma below. The hidden map is returned, so
// alignment quality has an exact reference.
struct SyntheticSpec {
    int n_docs = 1000;
    int n_queries = 100;
    int strong_dim = 64;
    int weak_dim = 32;
    // Per-coordinate Gaussian noise scale for content scatter (documents
    // around centers, queries around their positive document) and for the
    // weak embedder's query views. Content scatter is confined to the
    // cluster-center span — document/query variation stays inside the
    // corpus's content subspace. Weak document views get isotropic noise
    // with total norm ~noise_sigma instead: the weak embedder is assumed
    // decent on documents and poor on queries.
    double noise_sigma = 0.02;
    int cluster_count = 20;
    uint64_t seed = 0;

    // Tasks group clusters (task = cluster mod task_count); 0 means one
    // task per cluster. Lets the corpus have fine-grained clusters while
    // keeping enough queries per task for splitting.
    int task_count = 0;

    // Strength of a hidden orthogonal rotation applied to query vectors
    // before noise: a systematic query-vs-document distribution shift that
    // document-only alignment cannot see but labeled adaptation can learn.
    // 0 keeps queries as plain noisy copies of their positive document.
    double query_shift = 0.0;

    // Forces the hidden map to the identity (requires equal dims); with
    // noise_sigma 0 this makes zero-shot strong-vs-weak retrieval perfect.
    bool use_identity_map = false;

    // Unjudged near-duplicates of each positive document injected into the
    // corpus (false-negative bait for naive mining).
    int near_dups_per_positive = 0;
    double near_dup_sigma = 0.01;

    void validate() const;
};

struct SyntheticData {
    EmbeddingSet strong_docs;
    EmbeddingSet strong_queries;
    EmbeddingSet weak_docs;
    EmbeddingSet weak_queries;
    RelevanceJudgments qrels;
    TaskTag tags;  // covers every document and query id
    Eigen::MatrixXd ground_truth_map;  // strong_dim x weak_dim, orthonormal columns
};

// Deterministic from spec.seed. Documents cluster around cluster_count
// unit centers (task = cluster, group = cluster mod 4); each query is a
// noisy copy of its single grade-1 positive document.
SyntheticData make_synthetic(const SyntheticSpec& spec);

}  // namespace era
