#pragma once

#include "era/adapter.hpp"

#include <Eigen/Dense>

#include <vector>

namespace era {

// Scalar loss together with its exact gradient with respect to the adapter
// weights. degenerate_rows counts examples whose adapted query vector fell
// below the norm floor; those rows contribute zero gradient.
struct LossValue {
    double value = 0.0;
    Eigen::MatrixXd grad;
    int degenerate_rows = 0;
};

// Paired document embeddings from the two embedders, one row per document,
// both sides unit-normalized.
struct AlignmentBatch {
    Eigen::MatrixXd q_side;  // rows of E_q(d)
    Eigen::MatrixXd d_side;  // rows of E_d(d)

    Eigen::Index size() const { return q_side.rows(); }
    void validate() const;
    AlignmentBatch subset(const std::vector<size_t>& rows) const;
};

// Labeled contrastive examples: one query, one positive, k negatives per
// row; k is constant within a batch. Negatives of example i occupy rows
// [i*k, (i+1)*k) of the negatives matrix.
struct ContrastiveBatch {
    Eigen::MatrixXd queries;    // n x query_dim
    Eigen::MatrixXd positives;  // n x doc_dim
    Eigen::MatrixXd negatives;  // (n*k) x doc_dim
    int k = 0;

    Eigen::Index size() const { return queries.rows(); }
    void validate() const;
    ContrastiveBatch subset(const std::vector<size_t>& rows) const;
};

// Mean over rows of (1 - cos(apply_adapter(a, q_row), d_row)).
LossValue alignment_loss(const Adapter& a, const AlignmentBatch& b);

// Mean over examples of -log(exp(s+/t) / (exp(s+/t) + sum_j exp(s_j-/t))),
// computed with max-subtraction stabilization.
LossValue infonce_loss(const Adapter& a, const ContrastiveBatch& b, double temperature);

// Mean over (example, negative) pairs of max(0, margin - s+ + s-).
LossValue triplet_loss(const Adapter& a, const ContrastiveBatch& b, double margin);

}  // namespace era
