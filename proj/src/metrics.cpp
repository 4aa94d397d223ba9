#include "era/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

namespace era {

using nlohmann::json;

namespace {

// Shared walk: per query, hand the ranked list and that query's judged
// grades to the scorer, excluding queries with no positive judgment.
template <typename Scorer>
PerQueryMetric score_queries(const RetrievalRun& run, const RelevanceJudgments& qrels,
                             Scorer scorer) {
    PerQueryMetric out;
    for (const auto& [qid, ranking] : run.rankings) {
        auto it = qrels.entries.find(qid);
        bool has_positive = false;
        if (it != qrels.entries.end())
            for (const auto& [did, grade] : it->second)
                if (grade > 0) { has_positive = true; break; }
        if (!has_positive) {
            out.excluded.push_back(qid);
            continue;
        }
        out.values[qid] = scorer(qid, ranking, it->second);
    }
    return out;
}

double gain(int grade) { return std::ldexp(1.0, grade) - 1.0; }

}  // namespace

PerQueryMetric ndcg_at_k(const RetrievalRun& run, const RelevanceJudgments& qrels, int k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    return score_queries(
        run, qrels,
        [&](const std::string&, const std::vector<std::pair<std::string, double>>& ranking,
            const std::map<std::string, int>& judged) {
            double dcg = 0.0;
            size_t cut = std::min(ranking.size(), static_cast<size_t>(k));
            for (size_t i = 0; i < cut; ++i) {
                auto it = judged.find(ranking[i].first);
                int grade = it == judged.end() ? 0 : it->second;
                dcg += gain(grade) / std::log2(static_cast<double>(i) + 2.0);
            }
            std::vector<int> grades;
            for (const auto& [did, grade] : judged)
                if (grade > 0) grades.push_back(grade);
            std::sort(grades.begin(), grades.end(), std::greater<int>());
            double idcg = 0.0;
            for (size_t i = 0; i < std::min(grades.size(), static_cast<size_t>(k)); ++i)
                idcg += gain(grades[i]) / std::log2(static_cast<double>(i) + 2.0);
            return dcg / idcg;
        });
}

PerQueryMetric recall_at_k(const RetrievalRun& run, const RelevanceJudgments& qrels, int k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    return score_queries(
        run, qrels,
        [&](const std::string&, const std::vector<std::pair<std::string, double>>& ranking,
            const std::map<std::string, int>& judged) {
            int total = 0;
            for (const auto& [did, grade] : judged)
                if (grade > 0) ++total;
            int hits = 0;
            size_t cut = std::min(ranking.size(), static_cast<size_t>(k));
            for (size_t i = 0; i < cut; ++i) {
                auto it = judged.find(ranking[i].first);
                if (it != judged.end() && it->second > 0) ++hits;
            }
            return static_cast<double>(hits) / static_cast<double>(total);
        });
}

PerQueryMetric map_at_k(const RetrievalRun& run, const RelevanceJudgments& qrels, int k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    return score_queries(
        run, qrels,
        [&](const std::string&, const std::vector<std::pair<std::string, double>>& ranking,
            const std::map<std::string, int>& judged) {
            int total = 0;
            for (const auto& [did, grade] : judged)
                if (grade > 0) ++total;
            double sum = 0.0;
            int hits = 0;
            size_t cut = std::min(ranking.size(), static_cast<size_t>(k));
            for (size_t i = 0; i < cut; ++i) {
                auto it = judged.find(ranking[i].first);
                if (it != judged.end() && it->second > 0) {
                    ++hits;
                    sum += static_cast<double>(hits) / (static_cast<double>(i) + 1.0);
                }
            }
            return sum / static_cast<double>(total);
        });
}

namespace {

struct Accum {
    MetricValues sum;
    int n = 0;

    void add(const MetricValues& v) {
        sum.ndcg_at_10 += v.ndcg_at_10;
        sum.recall_at_100 += v.recall_at_100;
        sum.map_at_100 += v.map_at_100;
        ++n;
    }
    MetricValues mean() const {
        return {sum.ndcg_at_10 / n, sum.recall_at_100 / n, sum.map_at_100 / n};
    }
};

}  // namespace

MetricsReport aggregate(const std::map<std::string, MetricValues>& per_query,
                        const std::vector<std::string>& excluded, const TaskTag& tags,
                        const RelevanceJudgments& qrels) {
    MetricsReport report;
    report.per_query = per_query;
    report.excluded_queries = excluded;

    std::map<std::string, std::map<std::string, Accum>> task_acc;  // group -> task
    for (const auto& [qid, values] : per_query) {
        const auto& where = tags.of(qid);
        task_acc[where.group][where.task].add(values);
        report.queries_per_group[where.group] += 1;
        auto it = qrels.entries.find(qid);
        if (it != qrels.entries.end())
            report.judged_docs_per_group[where.group] += static_cast<int>(it->second.size());
    }
    if (task_acc.empty()) throw std::invalid_argument("no scored queries to aggregate");

    Accum overall;
    for (const auto& [group, tasks] : task_acc) {
        Accum group_acc;
        for (const auto& [task, acc] : tasks) {
            MetricValues task_mean = acc.mean();
            report.per_task[group][task] = task_mean;
            group_acc.add(task_mean);
        }
        MetricValues group_mean = group_acc.mean();
        report.per_group[group] = group_mean;
        overall.add(group_mean);
    }
    report.overall = overall.mean();
    return report;
}

MetricsReport evaluate_run(const RetrievalRun& run, const RelevanceJudgments& qrels,
                           const TaskTag& tags) {
    PerQueryMetric ndcg = ndcg_at_k(run, qrels);
    PerQueryMetric recall = recall_at_k(run, qrels);
    PerQueryMetric map = map_at_k(run, qrels);
    std::map<std::string, MetricValues> per_query;
    for (const auto& [qid, v] : ndcg.values)
        per_query[qid] = {v, recall.values.at(qid), map.values.at(qid)};
    return aggregate(per_query, ndcg.excluded, tags, qrels);
}

namespace {

json values_to_json(const MetricValues& v) {
    return {{"ndcg_at_10", v.ndcg_at_10},
            {"recall_at_100", v.recall_at_100},
            {"map_at_100", v.map_at_100}};
}

MetricValues values_from_json(const json& j) {
    return {j.at("ndcg_at_10").get<double>(), j.at("recall_at_100").get<double>(),
            j.at("map_at_100").get<double>()};
}

}  // namespace

void save_metrics_report(const MetricsReport& report, const std::string& path) {
    json j;
    j["overall"] = values_to_json(report.overall);
    j["per_group"] = json::object();
    for (const auto& [group, v] : report.per_group) j["per_group"][group] = values_to_json(v);
    j["per_task"] = json::object();
    for (const auto& [group, tasks] : report.per_task) {
        json g = json::object();
        for (const auto& [task, v] : tasks) g[task] = values_to_json(v);
        j["per_task"][group] = std::move(g);
    }
    j["per_query"] = json::object();
    for (const auto& [qid, v] : report.per_query) j["per_query"][qid] = values_to_json(v);
    j["counts"] = {{"queries_per_group", report.queries_per_group},
                   {"judged_docs_per_group", report.judged_docs_per_group}};
    j["excluded_queries"] = report.excluded_queries;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

MetricsReport load_metrics_report(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    MetricsReport report;
    report.overall = values_from_json(j.at("overall"));
    for (const auto& [group, v] : j.at("per_group").items())
        report.per_group[group] = values_from_json(v);
    for (const auto& [group, tasks] : j.at("per_task").items())
        for (const auto& [task, v] : tasks.items())
            report.per_task[group][task] = values_from_json(v);
    for (const auto& [qid, v] : j.at("per_query").items())
        report.per_query[qid] = values_from_json(v);
    const json& counts = j.at("counts");
    for (const auto& [group, n] : counts.at("queries_per_group").items())
        report.queries_per_group[group] = n.get<int>();
    for (const auto& [group, n] : counts.at("judged_docs_per_group").items())
        report.judged_docs_per_group[group] = n.get<int>();
    report.excluded_queries = j.at("excluded_queries").get<std::vector<std::string>>();
    return report;
}

std::string render_table(const std::vector<std::pair<std::string, MetricsReport>>& rows,
                         const std::string& metric) {
    double MetricValues::*field = nullptr;
    if (metric == "ndcg_at_10") field = &MetricValues::ndcg_at_10;
    else if (metric == "recall_at_100") field = &MetricValues::recall_at_100;
    else if (metric == "map_at_100") field = &MetricValues::map_at_100;
    else throw std::invalid_argument("unknown metric: " + metric);

    std::set<std::string> group_set;
    for (const auto& [name, report] : rows)
        for (const auto& [group, v] : report.per_group) group_set.insert(group);
    std::vector<std::string> groups(group_set.begin(), group_set.end());

    size_t label_w = std::string("method").size();
    for (const auto& [name, report] : rows) label_w = std::max(label_w, name.size());
    std::vector<size_t> col_w;
    col_w.push_back(std::max<size_t>(6, std::string("Avg").size()));
    for (const auto& g : groups) col_w.push_back(std::max<size_t>(6, g.size()));

    auto pad = [](const std::string& s, size_t w) {
        return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
    };
    auto cell = [&](double value, size_t w) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%*.2f", static_cast<int>(w), value * 100.0);
        return std::string(buf);
    };

    std::string out = pad("method", label_w) + "  " + pad("Avg", col_w[0]);
    for (size_t c = 0; c < groups.size(); ++c) out += "  " + pad(groups[c], col_w[c + 1]);
    out += "\n";
    out += std::string(out.size() - 1, '-') + "\n";
    for (const auto& [name, report] : rows) {
        out += pad(name, label_w) + "  " + cell(report.overall.*field, col_w[0]);
        for (size_t c = 0; c < groups.size(); ++c) {
            auto it = report.per_group.find(groups[c]);
            out += "  ";
            out += it == report.per_group.end() ? pad("-", col_w[c + 1])
                                                : cell(it->second.*field, col_w[c + 1]);
        }
        out += "\n";
    }
    return out;
}

}  // namespace era
