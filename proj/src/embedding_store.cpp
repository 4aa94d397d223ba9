#include "era/embedding_store.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace era {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::string at_line(const std::string& path, size_t line_no) {
    return path + ":" + std::to_string(line_no) + ": ";
}

constexpr char kEmbeddingMagic[4] = {'E', 'R', 'A', 'E'};
constexpr uint8_t kEmbeddingVersion = 1;

void write_u16(std::ostream& out, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f32(std::ostream& out, float v) {
    static_assert(sizeof(float) == 4);
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(out, bits);
}

bool read_bytes(std::istream& in, void* dst, size_t n) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<size_t>(in.gcount()) == n;
}

uint16_t read_u16(std::istream& in, const std::string& ctx) {
    unsigned char b[2];
    if (!read_bytes(in, b, 2)) fail(ctx + "unexpected end of file");
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t read_u32(std::istream& in, const std::string& ctx) {
    unsigned char b[4];
    if (!read_bytes(in, b, 4)) fail(ctx + "unexpected end of file");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t read_u64(std::istream& in, const std::string& ctx) {
    unsigned char b[8];
    if (!read_bytes(in, b, 8)) fail(ctx + "unexpected end of file");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

float read_f32(std::istream& in, const std::string& ctx) {
    uint32_t bits = read_u32(in, ctx);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

EmbeddingSet load_packed(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open embedding file: " + path);
    const std::string ctx = path + ": ";

    char magic[4];
    if (!read_bytes(in, magic, 4) || std::memcmp(magic, kEmbeddingMagic, 4) != 0)
        fail(ctx + "malformed header: bad magic (expected ERAE)");
    unsigned char version;
    if (!read_bytes(in, &version, 1)) fail(ctx + "malformed header: missing version");
    if (version != kEmbeddingVersion)
        fail(ctx + "unsupported format version " + std::to_string(version));

    uint32_t dim = read_u32(in, ctx);
    uint64_t count = read_u64(in, ctx);
    if (dim == 0) fail(ctx + "malformed header: dim must be positive");

    std::vector<std::string> ids;
    ids.reserve(count);
    Eigen::MatrixXd vectors(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    for (uint64_t r = 0; r < count; ++r) {
        const std::string row_ctx = ctx + "row " + std::to_string(r + 1) + ": ";
        uint16_t id_len = read_u16(in, row_ctx);
        std::string id(id_len, '\0');
        if (id_len > 0 && !read_bytes(in, id.data(), id_len))
            fail(row_ctx + "unexpected end of file in id");
        for (uint32_t c = 0; c < dim; ++c) {
            float v = read_f32(in, row_ctx);
            if (!std::isfinite(v)) fail(row_ctx + "non-finite value at column " + std::to_string(c + 1));
            vectors(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
        }
        ids.push_back(std::move(id));
    }
    char extra;
    if (in.read(&extra, 1)) fail(ctx + "trailing bytes after last record");

    std::unordered_set<std::string> seen;
    for (size_t r = 0; r < ids.size(); ++r) {
        if (!seen.insert(ids[r]).second)
            fail(ctx + "duplicate id '" + ids[r] + "' at row " + std::to_string(r + 1));
    }
    return EmbeddingSet::create(path, std::move(ids), std::move(vectors));
}

EmbeddingSet load_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open embedding file: " + path);

    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows;
    std::unordered_set<std::string> seen;
    Eigen::Index dim = -1;

    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            fail(at_line(path, line_no) + "invalid JSON: " + e.what());
        }
        if (!rec.is_object() || !rec.contains("id") || !rec.contains("vector"))
            fail(at_line(path, line_no) + "record must be an object with 'id' and 'vector'");
        if (!rec["id"].is_string()) fail(at_line(path, line_no) + "'id' must be a string");
        if (!rec["vector"].is_array()) fail(at_line(path, line_no) + "'vector' must be an array");

        std::string id = rec["id"].get<std::string>();
        if (!seen.insert(id).second)
            fail(at_line(path, line_no) + "duplicate id '" + id + "'");

        std::vector<double> v;
        v.reserve(rec["vector"].size());
        for (const auto& x : rec["vector"]) {
            if (!x.is_number()) fail(at_line(path, line_no) + "vector entries must be numbers");
            double d = x.get<double>();
            if (!std::isfinite(d)) fail(at_line(path, line_no) + "non-finite vector entry");
            v.push_back(d);
        }
        if (v.empty()) fail(at_line(path, line_no) + "vector must be non-empty");
        if (dim < 0) {
            dim = static_cast<Eigen::Index>(v.size());
        } else if (static_cast<Eigen::Index>(v.size()) != dim) {
            fail(at_line(path, line_no) + "dimension mismatch: expected " + std::to_string(dim) +
                 ", got " + std::to_string(v.size()));
        }
        ids.push_back(std::move(id));
        rows.push_back(std::move(v));
    }
    if (dim < 0) fail(path + ": lines file holds no records; dimension unknown");

    Eigen::MatrixXd vectors(static_cast<Eigen::Index>(rows.size()), dim);
    for (size_t r = 0; r < rows.size(); ++r)
        for (Eigen::Index c = 0; c < dim; ++c) vectors(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<size_t>(c)];
    return EmbeddingSet::create(path, std::move(ids), std::move(vectors));
}

void save_packed(const EmbeddingSet& set, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot write embedding file: " + path);
    out.write(kEmbeddingMagic, 4);
    out.put(static_cast<char>(kEmbeddingVersion));
    write_u32(out, static_cast<uint32_t>(set.dim()));
    write_u64(out, static_cast<uint64_t>(set.size()));
    for (Eigen::Index r = 0; r < set.size(); ++r) {
        const std::string& id = set.ids[static_cast<size_t>(r)];
        if (id.size() > 0xffff) fail("id too long for packed format: " + id.substr(0, 32) + "...");
        write_u16(out, static_cast<uint16_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
        for (Eigen::Index c = 0; c < set.dim(); ++c)
            write_f32(out, static_cast<float>(set.vectors(r, c)));
    }
    if (!out) fail("write failed: " + path);
}

void save_lines(const EmbeddingSet& set, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail("cannot write embedding file: " + path);
    for (Eigen::Index r = 0; r < set.size(); ++r) {
        json rec;
        rec["id"] = set.ids[static_cast<size_t>(r)];
        std::vector<double> v(static_cast<size_t>(set.dim()));
        for (Eigen::Index c = 0; c < set.dim(); ++c)
            v[static_cast<size_t>(c)] = static_cast<double>(static_cast<float>(set.vectors(r, c)));
        rec["vector"] = v;
        out << rec.dump() << "\n";
    }
    if (!out) fail("write failed: " + path);
}

std::string format_score(double s) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", s);
    return buf;
}

}  // namespace

Eigen::Index EmbeddingSet::row_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw std::invalid_argument("unknown id: " + id);
    return it->second;
}

void EmbeddingSet::rebuild_index() {
    index_.clear();
    index_.reserve(ids.size());
    for (size_t r = 0; r < ids.size(); ++r) index_[ids[r]] = static_cast<Eigen::Index>(r);
}

void EmbeddingSet::validate() const {
    if (vectors.cols() <= 0) throw std::invalid_argument("embedding dim must be positive");
    if (static_cast<Eigen::Index>(ids.size()) != vectors.rows())
        throw std::invalid_argument("id count does not match row count");
    if (index_.size() != ids.size()) throw std::invalid_argument("duplicate ids in embedding set");
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
        if (!vectors.row(r).allFinite())
            throw std::invalid_argument("non-finite entry in row " + std::to_string(r + 1) +
                                        " (id '" + ids[static_cast<size_t>(r)] + "')");
    }
}

EmbeddingSet EmbeddingSet::subset(const std::vector<std::string>& keep) const {
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(keep.size()), vectors.cols());
    for (size_t i = 0; i < keep.size(); ++i)
        rows.row(static_cast<Eigen::Index>(i)) = vectors.row(row_of(keep[i]));
    return create(embedder_tag, keep, std::move(rows));
}

EmbeddingSet EmbeddingSet::create(std::string embedder_tag, std::vector<std::string> ids,
                                  Eigen::MatrixXd vectors) {
    EmbeddingSet set;
    set.embedder_tag = std::move(embedder_tag);
    set.ids = std::move(ids);
    set.vectors = std::move(vectors);
    set.rebuild_index();
    set.validate();
    return set;
}

int RelevanceJudgments::grade(const std::string& qid, const std::string& did) const {
    auto q = entries.find(qid);
    if (q == entries.end()) return 0;
    auto d = q->second.find(did);
    return d == q->second.end() ? 0 : d->second;
}

std::vector<std::string> RelevanceJudgments::positives(const std::string& qid) const {
    std::vector<std::string> out;
    auto q = entries.find(qid);
    if (q == entries.end()) return out;
    for (const auto& [did, g] : q->second)
        if (g > 0) out.push_back(did);
    return out;
}

void RelevanceJudgments::validate() const {
    for (const auto& [qid, docs] : entries) {
        bool any_positive = false;
        for (const auto& [did, g] : docs) {
            if (g < 0)
                throw std::invalid_argument("negative grade for (" + qid + ", " + did + ")");
            any_positive = any_positive || g > 0;
        }
        if (!any_positive)
            throw std::invalid_argument("query '" + qid + "' has no positive judgment");
    }
}

void RetrievalRun::validate() const {
    for (const auto& [qid, ranked] : rankings) {
        std::unordered_set<std::string> seen;
        for (size_t i = 0; i < ranked.size(); ++i) {
            if (!std::isfinite(ranked[i].second))
                throw std::invalid_argument("non-finite score for query '" + qid + "'");
            if (!seen.insert(ranked[i].first).second)
                throw std::invalid_argument("duplicate document '" + ranked[i].first +
                                            "' in ranking of query '" + qid + "'");
            if (i > 0) {
                const auto& prev = ranked[i - 1];
                const auto& cur = ranked[i];
                if (cur.second > prev.second ||
                    (cur.second == prev.second && cur.first <= prev.first))
                    throw std::invalid_argument(
                        "ranking of query '" + qid +
                        "' is not sorted by descending score with ascending-id ties");
            }
        }
    }
}

const TaskTag::Assignment& TaskTag::of(const std::string& id) const {
    auto it = assignment.find(id);
    if (it == assignment.end()) throw std::invalid_argument("id has no task assignment: " + id);
    return it->second;
}

EmbeddingSet load_embeddings(const std::string& path, EmbeddingFormat format) {
    return format == EmbeddingFormat::packed ? load_packed(path) : load_lines(path);
}

void save_embeddings(const EmbeddingSet& set, const std::string& path, EmbeddingFormat format) {
    set.validate();
    if (format == EmbeddingFormat::packed)
        save_packed(set, path);
    else
        save_lines(set, path);
}

RelevanceJudgments load_qrels(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open qrels file: " + path);

    RelevanceJudgments qrels;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        std::string qid, iter, did, grade_str, extra;
        if (!(ss >> qid >> iter >> did >> grade_str))
            fail(at_line(path, line_no) + "malformed qrels line (want 'qid 0 docid grade')");
        if (ss >> extra) fail(at_line(path, line_no) + "trailing tokens on qrels line");
        int grade = 0;
        try {
            size_t pos = 0;
            grade = std::stoi(grade_str, &pos);
            if (pos != grade_str.size()) throw std::invalid_argument(grade_str);
        } catch (const std::exception&) {
            fail(at_line(path, line_no) + "grade is not an integer: '" + grade_str + "'");
        }
        if (grade < 0) fail(at_line(path, line_no) + "negative grade " + std::to_string(grade));
        auto [it, inserted] = qrels.entries[qid].emplace(did, grade);
        (void)it;
        if (!inserted)
            fail(at_line(path, line_no) + "duplicate pair (" + qid + ", " + did + ")");
    }
    try {
        qrels.validate();
    } catch (const std::exception& e) {
        fail(path + ": " + e.what());
    }
    return qrels;
}

void save_qrels(const RelevanceJudgments& qrels, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail("cannot write qrels file: " + path);
    for (const auto& [qid, docs] : qrels.entries)
        for (const auto& [did, g] : docs) out << qid << " 0 " << did << " " << g << "\n";
    if (!out) fail("write failed: " + path);
}

void write_run(const RetrievalRun& run, const std::string& path, const std::string& tag) {
    run.validate();
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail("cannot write run file: " + path);
    for (const auto& [qid, ranked] : run.rankings) {
        size_t rank = 1;
        for (const auto& [did, score] : ranked) {
            out << qid << " Q0 " << did << " " << rank << " " << format_score(score) << " " << tag
                << "\n";
            ++rank;
        }
    }
    if (!out) fail("write failed: " + path);
}

std::pair<RetrievalRun, std::string> read_run(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open run file: " + path);

    std::map<std::string, std::vector<std::tuple<size_t, std::string, double>>> raw;
    std::string tag;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        std::string qid, q0, did, rank_str, score_str, line_tag, extra;
        if (!(ss >> qid >> q0 >> did >> rank_str >> score_str >> line_tag))
            fail(at_line(path, line_no) + "malformed run line (want 'qid Q0 docid rank score tag')");
        if (ss >> extra) fail(at_line(path, line_no) + "trailing tokens on run line");
        size_t rank = 0;
        double score = 0.0;
        try {
            rank = std::stoul(rank_str);
            size_t pos = 0;
            score = std::stod(score_str, &pos);
            if (pos != score_str.size()) throw std::invalid_argument(score_str);
        } catch (const std::exception&) {
            fail(at_line(path, line_no) + "bad rank or score");
        }
        if (rank == 0) fail(at_line(path, line_no) + "ranks start at 1");
        if (tag.empty())
            tag = line_tag;
        else if (tag != line_tag)
            fail(at_line(path, line_no) + "inconsistent run tag '" + line_tag + "'");
        raw[qid].emplace_back(rank, did, score);
    }

    RetrievalRun run;
    for (auto& [qid, rows] : raw) {
        std::sort(rows.begin(), rows.end(),
                  [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
        auto& ranked = run.rankings[qid];
        for (size_t i = 0; i < rows.size(); ++i) {
            if (std::get<0>(rows[i]) != i + 1)
                fail(path + ": query '" + qid + "' has non-contiguous ranks");
            ranked.emplace_back(std::get<1>(rows[i]), std::get<2>(rows[i]));
        }
    }
    try {
        run.validate();
    } catch (const std::exception& e) {
        fail(path + ": " + e.what());
    }
    return {run, tag};
}

TaskTag load_tags(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open tags file: " + path);
    TaskTag tags;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            fail(at_line(path, line_no) + "invalid JSON: " + e.what());
        }
        if (!rec.contains("id") || !rec.contains("task") || !rec.contains("group"))
            fail(at_line(path, line_no) + "tag record needs 'id', 'task', 'group'");
        std::string id = rec["id"].get<std::string>();
        auto [it, inserted] = tags.assignment.emplace(
            id, TaskTag::Assignment{rec["task"].get<std::string>(), rec["group"].get<std::string>()});
        (void)it;
        if (!inserted) fail(at_line(path, line_no) + "id '" + id + "' assigned twice");
    }
    return tags;
}

void save_tags(const TaskTag& tags, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail("cannot write tags file: " + path);
    for (const auto& [id, a] : tags.assignment) {
        json rec;
        rec["id"] = id;
        rec["task"] = a.task;
        rec["group"] = a.group;
        out << rec.dump() << "\n";
    }
    if (!out) fail("write failed: " + path);
}

}  // namespace era
