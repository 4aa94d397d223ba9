#pragma once

#include "era/embedding_store.hpp"

#include <map>
#include <string>
#include <vector>

namespace era {

// Per-query metric values plus the scored queries that had to be excluded
// for lack of any positive judgment (the metrics are undefined there).
struct PerQueryMetric {
    std::map<std::string, double> values;
    std::vector<std::string> excluded;
};

// DCG@k with exponential gain (2^grade - 1) / log2(rank + 1), normalized
// by the ideal DCG over the query's judged grades. Unjudged documents
// count as grade 0.
PerQueryMetric ndcg_at_k(const RetrievalRun& run, const RelevanceJudgments& qrels, int k = 10);

// Fraction of all relevant (grade > 0) documents found in the top k.
PerQueryMetric recall_at_k(const RetrievalRun& run, const RelevanceJudgments& qrels, int k = 100);

// AP@k = (1/R) * sum over relevant ranks i <= k of precision@i, with R the
// query's total relevant count.
PerQueryMetric map_at_k(const RetrievalRun& run, const RelevanceJudgments& qrels, int k = 100);

struct MetricValues {
    double ndcg_at_10 = 0.0;
    double recall_at_100 = 0.0;
    double map_at_100 = 0.0;
};

// Macro-average hierarchy: query -> task -> group -> overall, every level
// an unweighted mean of the one below. All three levels are kept in the
// report so the aggregation can be audited.
struct MetricsReport {
    std::map<std::string, MetricValues> per_query;
    std::map<std::string, std::map<std::string, MetricValues>> per_task;  // group -> task
    std::map<std::string, MetricValues> per_group;
    MetricValues overall;
    std::map<std::string, int> queries_per_group;
    std::map<std::string, int> judged_docs_per_group;  // judgment pairs of scored queries
    std::vector<std::string> excluded_queries;
};

MetricsReport aggregate(const std::map<std::string, MetricValues>& per_query,
                        const std::vector<std::string>& excluded, const TaskTag& tags,
                        const RelevanceJudgments& qrels);

// Convenience: the three default metrics plus aggregation in one step.
MetricsReport evaluate_run(const RetrievalRun& run, const RelevanceJudgments& qrels,
                           const TaskTag& tags);

void save_metrics_report(const MetricsReport& report, const std::string& path);
MetricsReport load_metrics_report(const std::string& path);

// Fixed-width table, one row per named report, columns Avg then groups;
// values are percentages of the chosen metric ("ndcg_at_10",
// "recall_at_100", or "map_at_100").
std::string render_table(const std::vector<std::pair<std::string, MetricsReport>>& rows,
                         const std::string& metric = "ndcg_at_10");

}  // namespace era
