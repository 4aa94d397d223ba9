#include "era/synthetic.hpp"

#include "era/adapter.hpp"
#include "era/rng.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

namespace era {

void SyntheticSpec::validate() const {
    if (n_docs < 1 || n_queries < 1 || strong_dim < 1 || weak_dim < 1 || cluster_count < 1)
        throw std::invalid_argument("synthetic counts and dims must be positive");
    if (weak_dim > strong_dim) throw std::invalid_argument("weak_dim must be <= strong_dim");
    if (cluster_count > n_docs)
        throw std::invalid_argument("cluster_count must not exceed n_docs");
    if (noise_sigma < 0.0 || near_dup_sigma < 0.0)
        throw std::invalid_argument("noise levels must be >= 0");
    if (query_shift < 0.0) throw std::invalid_argument("query_shift must be >= 0");
    if (task_count < 0 || task_count > cluster_count)
        throw std::invalid_argument("task_count must be in [0, cluster_count]");
    if (near_dups_per_positive < 0)
        throw std::invalid_argument("near_dups_per_positive must be >= 0");
    if (use_identity_map && strong_dim != weak_dim)
        throw std::invalid_argument("identity map requires strong_dim == weak_dim");
}

namespace {

Eigen::VectorXd gauss_vector(Eigen::Index dim, rng::Stream& stream) {
    Eigen::VectorXd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = stream.next_gaussian();
    return v;
}

Eigen::VectorXd noisy_unit(const Eigen::VectorXd& base, double sigma, rng::Stream& stream) {
    Eigen::VectorXd v = base;
    if (sigma > 0.0) v += sigma * gauss_vector(base.size(), stream);
    return l2_normalize(v);
}

// Content noise confined to a subspace: base + sigma * proj(g). Used with
// the cluster-center span so document/query variation stays inside the
// corpus's content subspace.
Eigen::VectorXd noisy_unit_in(const Eigen::VectorXd& base, double sigma,
                              const Eigen::MatrixXd* span, rng::Stream& stream) {
    if (sigma <= 0.0) return l2_normalize(base);
    Eigen::VectorXd g = gauss_vector(base.size(), stream);
    if (span != nullptr) g = *span * (span->transpose() * g);
    return l2_normalize(base + sigma * g);
}

std::string padded(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%05d", prefix, i);
    return buf;
}

}  // namespace

SyntheticData make_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticData data;

    // Cluster centers: orthonormal within each seeded Gaussian block (QR),
    // so clusters are well separated; a fresh block starts whenever
    // cluster_count exceeds strong_dim.
    rng::Stream center_stream(rng::mix(spec.seed, "synth-centers"));
    std::vector<Eigen::VectorXd> centers;
    centers.reserve(static_cast<size_t>(spec.cluster_count));
    while (static_cast<int>(centers.size()) < spec.cluster_count) {
        int block = std::min(spec.strong_dim, spec.cluster_count - static_cast<int>(centers.size()));
        Eigen::MatrixXd raw(spec.strong_dim, block);
        for (Eigen::Index j = 0; j < raw.cols(); ++j)
            raw.col(j) = gauss_vector(raw.rows(), center_stream);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
        Eigen::MatrixXd q =
            qr.householderQ() * Eigen::MatrixXd::Identity(spec.strong_dim, block);
        for (Eigen::Index j = 0; j < q.cols(); ++j) centers.push_back(q.col(j));
    }

    // Hidden strong->weak map with orthonormal columns.
    if (spec.use_identity_map) {
        data.ground_truth_map = Eigen::MatrixXd::Identity(spec.strong_dim, spec.weak_dim);
    } else {
        rng::Stream map_stream(rng::mix(spec.seed, "synth-map"));
        Eigen::MatrixXd raw(spec.strong_dim, spec.weak_dim);
        for (Eigen::Index j = 0; j < raw.cols(); ++j) raw.col(j) = gauss_vector(raw.rows(), map_stream);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
        data.ground_truth_map =
            qr.householderQ() * Eigen::MatrixXd::Identity(spec.strong_dim, spec.weak_dim);
    }

    // Content subspace: the span of the cluster centers. With fewer
    // clusters than dimensions, all content variation stays inside it;
    // once the centers span the whole space it is the whole space.
    Eigen::MatrixXd span_basis;
    const Eigen::MatrixXd* span = nullptr;
    if (spec.cluster_count < spec.strong_dim) {
        span_basis.resize(spec.strong_dim, spec.cluster_count);
        for (int c = 0; c < spec.cluster_count; ++c)
            span_basis.col(c) = centers[static_cast<size_t>(c)];
        span = &span_basis;
    }

    // Strong documents: noisy copies of their cluster center.
    std::vector<std::string> doc_ids;
    std::vector<Eigen::VectorXd> doc_vecs;
    std::vector<int> doc_cluster;
    rng::Stream doc_stream(rng::mix(spec.seed, "synth-docs"));
    for (int i = 0; i < spec.n_docs; ++i) {
        int c = i % spec.cluster_count;
        doc_ids.push_back(padded("d", i));
        doc_vecs.push_back(
            noisy_unit_in(centers[static_cast<size_t>(c)], spec.noise_sigma, span, doc_stream));
        doc_cluster.push_back(c);
    }

    // Hidden query rotation (Cayley transform of a scaled random
    // skew-symmetric matrix: exactly orthogonal, identity at shift 0).
    Eigen::MatrixXd rotation = Eigen::MatrixXd::Identity(spec.strong_dim, spec.strong_dim);
    if (spec.query_shift > 0.0) {
        rng::Stream shift_stream(rng::mix(spec.seed, "synth-query-shift"));
        Eigen::MatrixXd g(spec.strong_dim, spec.strong_dim);
        for (Eigen::Index j = 0; j < g.cols(); ++j) g.col(j) = gauss_vector(g.rows(), shift_stream);
        Eigen::MatrixXd skew = spec.query_shift * (g - g.transpose()) /
                               (2.0 * std::sqrt(static_cast<double>(spec.strong_dim)));
        Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(spec.strong_dim, spec.strong_dim);
        rotation = (eye + skew).partialPivLu().solve(eye - skew);
    }

    // Strong queries: rotated, noisy copies of their positive document.
    std::vector<std::string> query_ids;
    std::vector<Eigen::VectorXd> query_vecs;
    std::vector<int> query_target;
    rng::Stream query_stream(rng::mix(spec.seed, "synth-queries"));
    for (int j = 0; j < spec.n_queries; ++j) {
        int t = j % spec.n_docs;
        query_ids.push_back(padded("q", j));
        query_vecs.push_back(noisy_unit_in(rotation * doc_vecs[static_cast<size_t>(t)],
                                           spec.noise_sigma, span, query_stream));
        query_target.push_back(t);
        data.qrels.entries[query_ids.back()][doc_ids[static_cast<size_t>(t)]] = 1;
    }

    // Unjudged near-duplicates of each positive document, appended after
    // the originals.
    if (spec.near_dups_per_positive > 0) {
        rng::Stream dup_stream(rng::mix(spec.seed, "synth-neardup"));
        std::vector<bool> is_target(static_cast<size_t>(spec.n_docs), false);
        for (int t : query_target) is_target[static_cast<size_t>(t)] = true;
        for (int i = 0; i < spec.n_docs; ++i) {
            if (!is_target[static_cast<size_t>(i)]) continue;
            for (int r = 0; r < spec.near_dups_per_positive; ++r) {
                doc_ids.push_back(doc_ids[static_cast<size_t>(i)] + "-dup" + std::to_string(r));
                doc_vecs.push_back(noisy_unit_in(doc_vecs[static_cast<size_t>(i)],
                                                 spec.near_dup_sigma, span, dup_stream));
                doc_cluster.push_back(doc_cluster[static_cast<size_t>(i)]);
            }
        }
    }

    // Weak views: push through the hidden map, renormalize, add noise. The
    // weak embedder is mildly noisy on documents (total perturbation norm
    // ~noise_sigma) but heavily noisy on queries (noise_sigma per
    // coordinate) — the asymmetry that makes bridging a strong query
    // embedder onto weak document embeddings worthwhile.
    auto weaken = [&](const Eigen::VectorXd& strong, double sigma, rng::Stream& stream) {
        Eigen::VectorXd w = l2_normalize(data.ground_truth_map.transpose() * strong);
        return noisy_unit(w, sigma, stream);
    };
    double doc_sigma = spec.noise_sigma / std::sqrt(static_cast<double>(spec.weak_dim));

    Eigen::Index n_all_docs = static_cast<Eigen::Index>(doc_ids.size());
    Eigen::MatrixXd strong_docs(n_all_docs, spec.strong_dim);
    Eigen::MatrixXd weak_docs(n_all_docs, spec.weak_dim);
    rng::Stream weak_doc_stream(rng::mix(spec.seed, "synth-weak-docs"));
    for (Eigen::Index i = 0; i < n_all_docs; ++i) {
        strong_docs.row(i) = doc_vecs[static_cast<size_t>(i)].transpose();
        weak_docs.row(i) =
            weaken(doc_vecs[static_cast<size_t>(i)], doc_sigma, weak_doc_stream).transpose();
    }

    Eigen::Index n_q = static_cast<Eigen::Index>(query_ids.size());
    Eigen::MatrixXd strong_queries(n_q, spec.strong_dim);
    Eigen::MatrixXd weak_queries(n_q, spec.weak_dim);
    rng::Stream weak_query_stream(rng::mix(spec.seed, "synth-weak-queries"));
    for (Eigen::Index j = 0; j < n_q; ++j) {
        strong_queries.row(j) = query_vecs[static_cast<size_t>(j)].transpose();
        weak_queries.row(j) =
            weaken(query_vecs[static_cast<size_t>(j)], spec.noise_sigma, weak_query_stream)
                .transpose();
    }

    data.strong_docs = EmbeddingSet::create("synth-strong", doc_ids, std::move(strong_docs));
    data.weak_docs = EmbeddingSet::create("synth-weak", doc_ids, std::move(weak_docs));
    data.strong_queries =
        EmbeddingSet::create("synth-strong", query_ids, std::move(strong_queries));
    data.weak_queries = EmbeddingSet::create("synth-weak", query_ids, std::move(weak_queries));

    int tasks = spec.task_count > 0 ? spec.task_count : spec.cluster_count;
    auto tag_of = [&](int cluster) {
        int t = cluster % tasks;
        return TaskTag::Assignment{padded("task", t), "group" + std::to_string(t % 4)};
    };
    for (size_t i = 0; i < doc_ids.size(); ++i)
        data.tags.assignment[doc_ids[i]] = tag_of(doc_cluster[i]);
    for (size_t j = 0; j < query_ids.size(); ++j)
        data.tags.assignment[query_ids[j]] =
            tag_of(doc_cluster[static_cast<size_t>(query_target[j])]);
    return data;
}

}  // namespace era
