#include "era/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace era {

namespace {

void check_dims(const Adapter& a, Eigen::Index q_cols, Eigen::Index d_cols) {
    if (q_cols != a.query_dim())
        throw std::invalid_argument("batch query dim " + std::to_string(q_cols) +
                                    " does not match adapter query_dim " +
                                    std::to_string(a.query_dim()));
    if (d_cols != a.doc_dim())
        throw std::invalid_argument("batch doc dim " + std::to_string(d_cols) +
                                    " does not match adapter doc_dim " +
                                    std::to_string(a.doc_dim()));
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<size_t>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

// Similarity of the adapted (normalized) query against one unit document
// direction, plus the pieces needed to chain gradients back to W:
// d cos(u,e)/du = (e_hat - cos * u_hat) / ||u||.
struct AdaptedQuery {
    Eigen::VectorXd u;      // W^T q, unnormalized
    Eigen::VectorXd u_hat;  // unit direction (zero if degenerate)
    double u_norm = 0.0;
    bool degenerate = false;
};

AdaptedQuery adapt(const Adapter& a, const Eigen::VectorXd& q) {
    AdaptedQuery out;
    out.u = a.weights.transpose() * q;
    out.u_norm = out.u.norm();
    if (out.u_norm <= kNormEpsilon) {
        out.degenerate = true;
        out.u_hat = Eigen::VectorXd::Zero(out.u.size());
    } else {
        out.u_hat = out.u / out.u_norm;
    }
    return out;
}

}  // namespace

void AlignmentBatch::validate() const {
    if (q_side.rows() != d_side.rows())
        throw std::invalid_argument("alignment batch row counts differ");
    constexpr double tol = 1e-9;
    for (Eigen::Index r = 0; r < q_side.rows(); ++r) {
        if (std::abs(q_side.row(r).norm() - 1.0) > tol ||
            std::abs(d_side.row(r).norm() - 1.0) > tol)
            throw std::invalid_argument("alignment batch row " + std::to_string(r + 1) +
                                        " is not unit-norm");
    }
}

AlignmentBatch AlignmentBatch::subset(const std::vector<size_t>& rows) const {
    return AlignmentBatch{take_rows(q_side, rows), take_rows(d_side, rows)};
}

void ContrastiveBatch::validate() const {
    if (k < 1) throw std::invalid_argument("contrastive batch requires k >= 1");
    if (queries.rows() != positives.rows())
        throw std::invalid_argument("contrastive batch query/positive counts differ");
    if (negatives.rows() != queries.rows() * k)
        throw std::invalid_argument("contrastive batch negatives must hold k rows per example");
    if (positives.cols() != negatives.cols())
        throw std::invalid_argument("contrastive batch positive/negative dims differ");
}

ContrastiveBatch ContrastiveBatch::subset(const std::vector<size_t>& rows) const {
    ContrastiveBatch out;
    out.queries = take_rows(queries, rows);
    out.positives = take_rows(positives, rows);
    out.k = k;
    out.negatives.resize(static_cast<Eigen::Index>(rows.size()) * k, negatives.cols());
    for (size_t i = 0; i < rows.size(); ++i)
        out.negatives.middleRows(static_cast<Eigen::Index>(i) * k, k) =
            negatives.middleRows(static_cast<Eigen::Index>(rows[i]) * k, k);
    return out;
}

LossValue alignment_loss(const Adapter& a, const AlignmentBatch& b) {
    b.validate();
    check_dims(a, b.q_side.cols(), b.d_side.cols());

    LossValue out;
    out.grad = Eigen::MatrixXd::Zero(a.query_dim(), a.doc_dim());
    const Eigen::Index n = b.size();
    if (n == 0) throw std::invalid_argument("alignment batch is empty");

    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd q = b.q_side.row(i).transpose();
        Eigen::VectorXd d = b.d_side.row(i).transpose();
        AdaptedQuery aq = adapt(a, q);
        if (aq.degenerate) {
            // cos is 0 for a degenerate adapted vector; the row is counted
            // and contributes no gradient.
            out.value += 1.0;
            out.degenerate_rows += 1;
            continue;
        }
        double s = aq.u_hat.dot(d);
        out.value += 1.0 - s;
        Eigen::VectorXd dcos_du = (d - s * aq.u_hat) / aq.u_norm;
        out.grad.noalias() -= q * dcos_du.transpose();
    }
    out.value /= static_cast<double>(n);
    out.grad /= static_cast<double>(n);
    return out;
}

LossValue infonce_loss(const Adapter& a, const ContrastiveBatch& b, double temperature) {
    if (temperature <= 0.0)
        throw std::invalid_argument("temperature must be positive, got " +
                                    std::to_string(temperature));
    b.validate();
    check_dims(a, b.queries.cols(), b.positives.cols());

    LossValue out;
    out.grad = Eigen::MatrixXd::Zero(a.query_dim(), a.doc_dim());
    const Eigen::Index n = b.size();
    if (n == 0) throw std::invalid_argument("contrastive batch is empty");
    const int k = b.k;

    std::vector<double> scores(static_cast<size_t>(k) + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd q = b.queries.row(i).transpose();
        AdaptedQuery aq = adapt(a, q);

        // Unit document directions; a zero document keeps cosine 0.
        Eigen::VectorXd pos_hat = l2_normalize(b.positives.row(i).transpose());
        std::vector<Eigen::VectorXd> neg_hat(static_cast<size_t>(k));
        for (int j = 0; j < k; ++j)
            neg_hat[static_cast<size_t>(j)] = l2_normalize(b.negatives.row(i * k + j).transpose());

        if (aq.degenerate) {
            // All similarities are 0: the softmax is uniform over k+1 slots.
            out.value += std::log(static_cast<double>(k) + 1.0);
            out.degenerate_rows += 1;
            continue;
        }

        scores[0] = aq.u_hat.dot(pos_hat);
        for (int j = 0; j < k; ++j)
            scores[static_cast<size_t>(j) + 1] = aq.u_hat.dot(neg_hat[static_cast<size_t>(j)]);

        double zmax = scores[0] / temperature;
        for (int j = 0; j <= k; ++j)
            zmax = std::max(zmax, scores[static_cast<size_t>(j)] / temperature);
        double sum_exp = 0.0;
        for (int j = 0; j <= k; ++j)
            sum_exp += std::exp(scores[static_cast<size_t>(j)] / temperature - zmax);
        double lse = zmax + std::log(sum_exp);
        out.value += lse - scores[0] / temperature;

        // dl/ds_m = (p_m - [m==0]) / temperature, chained through the cosine.
        Eigen::VectorXd g_u = Eigen::VectorXd::Zero(a.doc_dim());
        for (int j = 0; j <= k; ++j) {
            double p = std::exp(scores[static_cast<size_t>(j)] / temperature - lse);
            double coeff = (p - (j == 0 ? 1.0 : 0.0)) / temperature;
            const Eigen::VectorXd& e = j == 0 ? pos_hat : neg_hat[static_cast<size_t>(j) - 1];
            g_u += coeff * (e - scores[static_cast<size_t>(j)] * aq.u_hat);
        }
        g_u /= aq.u_norm;
        out.grad.noalias() += q * g_u.transpose();
    }
    out.value /= static_cast<double>(n);
    out.grad /= static_cast<double>(n);
    return out;
}

LossValue triplet_loss(const Adapter& a, const ContrastiveBatch& b, double margin) {
    if (margin < 0.0)
        throw std::invalid_argument("margin must be non-negative, got " + std::to_string(margin));
    b.validate();
    check_dims(a, b.queries.cols(), b.positives.cols());

    LossValue out;
    out.grad = Eigen::MatrixXd::Zero(a.query_dim(), a.doc_dim());
    const Eigen::Index n = b.size();
    if (n == 0) throw std::invalid_argument("contrastive batch is empty");
    const int k = b.k;
    const double pair_count = static_cast<double>(n) * k;

    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd q = b.queries.row(i).transpose();
        AdaptedQuery aq = adapt(a, q);
        Eigen::VectorXd pos_hat = l2_normalize(b.positives.row(i).transpose());

        if (aq.degenerate) {
            // All similarities are 0: every pair contributes the bare margin.
            out.value += margin * k;
            out.degenerate_rows += 1;
            continue;
        }

        double s_pos = aq.u_hat.dot(pos_hat);
        Eigen::VectorXd g_u = Eigen::VectorXd::Zero(a.doc_dim());
        int active = 0;
        for (int j = 0; j < k; ++j) {
            Eigen::VectorXd neg_hat = l2_normalize(b.negatives.row(i * k + j).transpose());
            double s_neg = aq.u_hat.dot(neg_hat);
            double hinge = margin - s_pos + s_neg;
            if (hinge > 0.0) {
                out.value += hinge;
                ++active;
                g_u += neg_hat - s_neg * aq.u_hat;
            }
        }
        if (active > 0) {
            g_u -= static_cast<double>(active) * (pos_hat - s_pos * aq.u_hat);
            g_u /= aq.u_norm;
            out.grad.noalias() += q * g_u.transpose();
        }
    }
    out.value /= pair_count;
    out.grad /= pair_count;
    return out;
}

}  // namespace era
