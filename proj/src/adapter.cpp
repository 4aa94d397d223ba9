#include "era/adapter.hpp"

#include "era/rng.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace era {

namespace {

constexpr char kAdapterMagic[4] = {'E', 'R', 'A', 'W'};
constexpr uint8_t kAdapterVersion = 1;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

}  // namespace

void Adapter::validate() const {
    if (weights.rows() <= 0 || weights.cols() <= 0)
        throw std::invalid_argument("adapter dimensions must be positive");
    if (!weights.allFinite()) throw std::invalid_argument("adapter has non-finite entries");
}

InitScheme init_scheme_from_string(const std::string& s) {
    if (s == "identity-like" || s == "identity_like") return InitScheme::identity_like;
    if (s == "scaled-random" || s == "scaled_random") return InitScheme::scaled_random;
    throw std::invalid_argument("unknown init scheme: " + s);
}

std::string to_string(InitScheme s) {
    return s == InitScheme::identity_like ? "identity-like" : "scaled-random";
}

Adapter init_adapter(Eigen::Index query_dim, Eigen::Index doc_dim, InitScheme scheme,
                     uint64_t seed) {
    if (query_dim <= 0 || doc_dim <= 0)
        throw std::invalid_argument("adapter dimensions must be positive");
    Adapter a;
    a.weights = Eigen::MatrixXd::Zero(query_dim, doc_dim);
    if (scheme == InitScheme::identity_like) {
        for (Eigen::Index i = 0; i < std::min(query_dim, doc_dim); ++i) a.weights(i, i) = 1.0;
    } else {
        const double bound = std::sqrt(6.0 / static_cast<double>(query_dim + doc_dim));
        rng::Stream stream(rng::mix(seed, "adapter-init"));
        for (Eigen::Index r = 0; r < query_dim; ++r)
            for (Eigen::Index c = 0; c < doc_dim; ++c)
                a.weights(r, c) = stream.next_uniform(-bound, bound);
    }
    return a;
}

Eigen::VectorXd l2_normalize(const Eigen::VectorXd& v, bool* degenerate) {
    double norm = v.norm();
    if (norm <= kNormEpsilon) {
        if (degenerate) *degenerate = true;
        return v;
    }
    if (degenerate) *degenerate = false;
    return v / norm;
}

Eigen::VectorXd apply_adapter(const Adapter& a, const Eigen::VectorXd& q, bool* degenerate) {
    if (q.size() != a.query_dim())
        throw std::invalid_argument("query vector length " + std::to_string(q.size()) +
                                    " does not match adapter query_dim " +
                                    std::to_string(a.query_dim()));
    return l2_normalize(a.weights.transpose() * q, degenerate);
}

double cosine_sim(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    if (u.size() != v.size())
        throw std::invalid_argument("cosine_sim length mismatch: " + std::to_string(u.size()) +
                                    " vs " + std::to_string(v.size()));
    double nu = u.norm();
    double nv = v.norm();
    if (nu <= kNormEpsilon || nv <= kNormEpsilon) return 0.0;
    return u.dot(v) / (nu * nv);
}

void save_adapter(const Adapter& a, const std::string& path, const AdapterMeta& meta) {
    a.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot write adapter file: " + path);
    out.write(kAdapterMagic, 4);
    out.put(static_cast<char>(kAdapterVersion));
    auto write_u32 = [&out](uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    write_u32(static_cast<uint32_t>(a.query_dim()));
    write_u32(static_cast<uint32_t>(a.doc_dim()));
    for (Eigen::Index r = 0; r < a.query_dim(); ++r) {
        for (Eigen::Index c = 0; c < a.doc_dim(); ++c) {
            double v = a.weights(r, c);
            uint64_t bits;
            std::memcpy(&bits, &v, 8);
            unsigned char b[8];
            for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
            out.write(reinterpret_cast<const char*>(b), 8);
        }
    }
    if (!out) fail("write failed: " + path);

    nlohmann::json sidecar;
    sidecar["init_scheme"] = meta.init_scheme;
    sidecar["seed"] = meta.seed;
    sidecar["provenance"] = meta.provenance;
    std::ofstream side(path + ".json", std::ios::trunc);
    if (!side) fail("cannot write adapter sidecar: " + path + ".json");
    side << sidecar.dump(2) << "\n";
}

Adapter load_adapter(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open adapter file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kAdapterMagic, 4) != 0)
        fail(path + ": malformed header: bad magic (expected ERAW)");
    char version;
    if (!in.get(version)) fail(path + ": missing version byte");
    if (static_cast<uint8_t>(version) != kAdapterVersion)
        fail(path + ": unsupported adapter version");
    auto read_u32 = [&in, &path]() {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (in.gcount() != 4) fail(path + ": unexpected end of file");
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
        return v;
    };
    uint32_t query_dim = read_u32();
    uint32_t doc_dim = read_u32();
    if (query_dim == 0 || doc_dim == 0) fail(path + ": adapter dimensions must be positive");

    Adapter a;
    a.weights.resize(static_cast<Eigen::Index>(query_dim), static_cast<Eigen::Index>(doc_dim));
    for (Eigen::Index r = 0; r < a.weights.rows(); ++r) {
        for (Eigen::Index c = 0; c < a.weights.cols(); ++c) {
            unsigned char b[8];
            in.read(reinterpret_cast<char*>(b), 8);
            if (in.gcount() != 8) fail(path + ": unexpected end of file in weights");
            uint64_t bits = 0;
            for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
            double v;
            std::memcpy(&v, &bits, 8);
            a.weights(r, c) = v;
        }
    }
    char extra;
    if (in.read(&extra, 1)) fail(path + ": trailing bytes after weights");
    a.validate();
    return a;
}

AdapterMeta load_adapter_meta(const std::string& path) {
    std::ifstream side(path + ".json");
    AdapterMeta meta;
    if (!side) return meta;
    nlohmann::json sidecar = nlohmann::json::parse(side);
    meta.init_scheme = sidecar.value("init_scheme", "");
    meta.seed = sidecar.value("seed", uint64_t{0});
    meta.provenance = sidecar.value("provenance", nlohmann::json::object());
    return meta;
}

}  // namespace era
