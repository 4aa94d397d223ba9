#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace era {

// Id-indexed dense matrix of fixed-dimension vectors produced by one
// embedder. Vectors are held in 64-bit floats internally; the packed file
// format stores 32-bit floats.
struct EmbeddingSet {
    std::string embedder_tag;
    std::vector<std::string> ids;
    Eigen::MatrixXd vectors;  // one row per id

    Eigen::Index dim() const { return vectors.cols(); }
    Eigen::Index size() const { return vectors.rows(); }

    bool has(const std::string& id) const { return index_.count(id) != 0; }
    Eigen::Index row_of(const std::string& id) const;
    Eigen::RowVectorXd row(const std::string& id) const { return vectors.row(row_of(id)); }

    // New set holding the given ids (in the order listed) and their rows.
    EmbeddingSet subset(const std::vector<std::string>& keep) const;

    // Checks the type invariants: unique ids, id/row count agreement,
    // finite entries, positive dim. Throws std::invalid_argument.
    void validate() const;

    static EmbeddingSet create(std::string embedder_tag, std::vector<std::string> ids,
                               Eigen::MatrixXd vectors);

    void rebuild_index();

private:
    std::unordered_map<std::string, Eigen::Index> index_;
};

// TREC-style relevance judgments: query id -> document id -> grade >= 0.
struct RelevanceJudgments {
    std::map<std::string, std::map<std::string, int>> entries;

    int grade(const std::string& qid, const std::string& did) const;
    bool is_positive(const std::string& qid, const std::string& did) const {
        return grade(qid, did) > 0;
    }
    std::vector<std::string> positives(const std::string& qid) const;

    void validate() const;
};

// Per-query ranked list of (document id, score), descending score with
// ties broken by ascending document id.
struct RetrievalRun {
    std::map<std::string, std::vector<std::pair<std::string, double>>> rankings;

    void validate() const;
};

// Task/group identity of queries and documents, used for per-group
// reporting and per-task sampling.
struct TaskTag {
    struct Assignment {
        std::string task;
        std::string group;
    };
    std::map<std::string, Assignment> assignment;

    const Assignment& of(const std::string& id) const;
};

enum class EmbeddingFormat { packed, lines };

EmbeddingSet load_embeddings(const std::string& path, EmbeddingFormat format);
void save_embeddings(const EmbeddingSet& set, const std::string& path, EmbeddingFormat format);

RelevanceJudgments load_qrels(const std::string& path);
void save_qrels(const RelevanceJudgments& qrels, const std::string& path);

void write_run(const RetrievalRun& run, const std::string& path, const std::string& tag);
// Returns the run plus the tag found on its lines.
std::pair<RetrievalRun, std::string> read_run(const std::string& path);

TaskTag load_tags(const std::string& path);
void save_tags(const TaskTag& tags, const std::string& path);

}  // namespace era
