#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <string>

namespace era {

// Norm floor below which a vector is treated as degenerate. Far below any
// meaningful 32-bit embedding magnitude.
inline constexpr double kNormEpsilon = 1e-12;

// Linear retrieval adapter: a dense matrix mapping the query embedder's
// output space (rows) onto the document embedder's space (columns).
struct Adapter {
    Eigen::MatrixXd weights;  // query_dim x doc_dim

    Eigen::Index query_dim() const { return weights.rows(); }
    Eigen::Index doc_dim() const { return weights.cols(); }

    void validate() const;
};

enum class InitScheme { identity_like, scaled_random };

InitScheme init_scheme_from_string(const std::string& s);
std::string to_string(InitScheme s);

// identity-like: 1 on the main diagonal up to min(dims), 0 elsewhere.
// scaled-random: entries uniform in +-sqrt(6/(query_dim+doc_dim)), keyed
// deterministically by the seed.
Adapter init_adapter(Eigen::Index query_dim, Eigen::Index doc_dim, InitScheme scheme,
                     uint64_t seed);

// Returns v / ||v||2 when the norm exceeds kNormEpsilon; otherwise returns
// v unchanged and sets *degenerate. Degeneracy is flagged, never thrown.
Eigen::VectorXd l2_normalize(const Eigen::VectorXd& v, bool* degenerate = nullptr);

// l2_normalize(q^T W). q must have length query_dim.
Eigen::VectorXd apply_adapter(const Adapter& a, const Eigen::VectorXd& q,
                              bool* degenerate = nullptr);

// u.v / (||u|| ||v||); 0 when either norm is at or below the floor.
double cosine_sim(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

// Provenance sidecar written next to the adapter binary as <path>.json.
struct AdapterMeta {
    std::string init_scheme;
    uint64_t seed = 0;
    nlohmann::json provenance = nlohmann::json::object();
};

void save_adapter(const Adapter& a, const std::string& path, const AdapterMeta& meta);
Adapter load_adapter(const std::string& path);
AdapterMeta load_adapter_meta(const std::string& path);

}  // namespace era
