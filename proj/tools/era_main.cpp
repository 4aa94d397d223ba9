// era: train and evaluate linear retrieval adapters over precomputed
// embeddings. Subcommands cover the full chain: synth -> split -> align ->
// mine -> adapt -> retrieve -> eval -> report.

#include "era/adapter.hpp"
#include "era/embedding_store.hpp"
#include "era/metrics.hpp"
#include "era/negative_mining.hpp"
#include "era/optimizer.hpp"
#include "era/pipeline.hpp"
#include "era/retrieval.hpp"
#include "era/synthetic.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace era;

EmbeddingFormat format_from_string(const std::string& s) {
    if (s == "packed") return EmbeddingFormat::packed;
    if (s == "lines") return EmbeddingFormat::lines;
    throw std::invalid_argument("unknown embedding format: " + s);
}

// Keep only the judged queries belonging to one split subset.
RelevanceJudgments restrict_qrels(const RelevanceJudgments& qrels, const SplitResult& split,
                                  const std::string& subset) {
    std::set<std::string> keep;
    if (subset == "train" || subset == "trainval") keep.insert(split.train.begin(), split.train.end());
    if (subset == "val" || subset == "trainval") keep.insert(split.val.begin(), split.val.end());
    if (subset == "test") keep.insert(split.test.begin(), split.test.end());
    if (keep.empty() && subset != "train" && subset != "val" && subset != "test" &&
        subset != "trainval")
        throw std::invalid_argument("unknown subset: " + subset);
    RelevanceJudgments out;
    for (const auto& [qid, docs] : qrels.entries)
        if (keep.count(qid) != 0) out.entries[qid] = docs;
    if (out.entries.empty())
        throw std::runtime_error("subset '" + subset + "' selects no judged queries");
    return out;
}

struct SynthOpts {
    std::string out_dir;
    SyntheticSpec spec;
};

void run_synth(const SynthOpts& o) {
    SyntheticData data = make_synthetic(o.spec);
    std::filesystem::create_directories(o.out_dir);
    auto at = [&](const char* name) { return (std::filesystem::path(o.out_dir) / name).string(); };
    save_embeddings(data.strong_docs, at("strong_docs.bin"), EmbeddingFormat::packed);
    save_embeddings(data.weak_docs, at("weak_docs.bin"), EmbeddingFormat::packed);
    save_embeddings(data.strong_queries, at("strong_queries.bin"), EmbeddingFormat::packed);
    save_embeddings(data.weak_queries, at("weak_queries.bin"), EmbeddingFormat::packed);
    save_qrels(data.qrels, at("qrels.txt"));
    save_tags(data.tags, at("tags.jsonl"));
    AdapterMeta meta;
    meta.init_scheme = "ground-truth";
    meta.seed = o.spec.seed;
    meta.provenance = {{"stage", "synth"}, {"n_docs", o.spec.n_docs}};
    save_adapter(Adapter{data.ground_truth_map}, at("ground_truth_map.bin"), meta);
    std::cout << "wrote " << data.strong_docs.size() << " docs, " << data.strong_queries.size()
              << " queries to " << o.out_dir << "\n";
}

struct SplitOpts {
    std::string qrels_path, tags_path, out_path;
    SplitSpec spec;
};

void run_split(const SplitOpts& o) {
    RelevanceJudgments qrels = load_qrels(o.qrels_path);
    TaskTag tags = load_tags(o.tags_path);
    std::vector<std::string> ids;
    for (const auto& [qid, docs] : qrels.entries) ids.push_back(qid);
    SplitResult split = split_dataset(ids, tags, o.spec);
    save_split(split, o.out_path);
    std::cout << "train " << split.train.size() << ", val " << split.val.size() << ", test "
              << split.test.size() << "\n";
    for (const auto& task : split.test_only_tasks)
        std::cout << "note: task " << task << " has fewer than 3 queries; assigned to test\n";
}

struct AlignOpts {
    std::string q_side, d_side, format = "packed";
    std::string tags_path;
    int per_task = 1000;
    std::string out_path, log_path;
    TrainConfig cfg = TrainConfig::alignment_defaults(0);
};

void run_align(const AlignOpts& o) {
    EmbeddingFormat fmt = format_from_string(o.format);
    EmbeddingSet q_side = load_embeddings(o.q_side, fmt);
    EmbeddingSet d_side = load_embeddings(o.d_side, fmt);
    if (!o.tags_path.empty()) {
        TaskTag tags = load_tags(o.tags_path);
        std::vector<std::string> sampled =
            sample_alignment_docs(q_side.ids, tags, o.per_task, o.cfg.seed);
        q_side = q_side.subset(sampled);
        d_side = d_side.subset(sampled);
    }
    TrainResult result = run_alignment_stage(q_side, d_side, o.cfg);
    AdapterMeta meta;
    meta.init_scheme =
        to_string(q_side.dim() == d_side.dim() ? InitScheme::identity_like : InitScheme::scaled_random);
    meta.seed = o.cfg.seed;
    meta.provenance = {{"stage", "alignment"},
                       {"pairs", q_side.size()},
                       {"learning_rate", o.cfg.learning_rate},
                       {"weight_decay", o.cfg.weight_decay},
                       {"batch_size", o.cfg.batch_size},
                       {"epochs", o.cfg.max_epochs}};
    save_adapter(result.adapter, o.out_path, meta);
    if (!o.log_path.empty()) write_train_log(result.report, o.log_path);
    std::cout << "alignment loss " << result.report.epochs.back().train_loss << " after "
              << result.report.stop_epoch << " epochs on " << q_side.size() << " pairs\n";
}

struct MineOpts {
    std::string run_path, qrels_path, docs_path, format = "packed";
    std::string strategy = "topk_percpos";
    int pool_size = kDefaultPoolSize;
    double perc = kDefaultPerc;
    int k = kDefaultNegatives;
    uint64_t seed = 0;
    std::string split_path, subset = "trainval";
    std::string queries_path, adapter_path;
    std::string out_path;
};

void run_mine(const MineOpts& o) {
    auto [run, run_tag] = read_run(o.run_path);
    (void)run_tag;
    RelevanceJudgments qrels = load_qrels(o.qrels_path);
    if (!o.split_path.empty()) qrels = restrict_qrels(qrels, load_split(o.split_path), o.subset);
    EmbeddingSet docs = load_embeddings(o.docs_path, format_from_string(o.format));

    MiningStrategy strategy = mining_strategy_from_string(o.strategy);
    NegativeSet negatives;
    if (strategy == MiningStrategy::topk_percpos) {
        std::optional<EmbeddingSet> queries;
        std::optional<Adapter> adapter;
        PairScorer scorer;
        if (!o.queries_path.empty()) {
            queries = load_embeddings(o.queries_path, format_from_string(o.format));
            if (!o.adapter_path.empty()) adapter = load_adapter(o.adapter_path);
            scorer = [&](const std::string& qid, const std::string& did) {
                Eigen::VectorXd q = queries->row(qid).transpose();
                Eigen::VectorXd u = adapter ? apply_adapter(*adapter, q) : q;
                return cosine_sim(u, docs.row(did).transpose());
            };
        }
        negatives = mine_topk_percpos(run, qrels, docs.ids, o.pool_size, o.perc, o.k, o.seed,
                                      scorer ? &scorer : nullptr);
    } else if (strategy == MiningStrategy::naive_topk) {
        negatives = mine_naive_topk(run, qrels, o.k);
    } else {
        negatives = mine_random(docs.ids, qrels, o.k, o.seed);
    }
    negatives.validate(qrels, &docs);
    save_negatives(negatives, o.out_path);
    std::cout << "mined " << negatives.per_query.size() << " queries (" << o.strategy << ", k="
              << o.k << ")\n";
}

struct AdaptOpts {
    std::string adapter_path, queries_path, docs_path, format = "packed";
    std::string qrels_path, negatives_path, split_path;
    std::string loss = "infonce";
    double margin = 0.2;
    int patience = 5;
    std::string out_path, log_path;
    TrainConfig cfg = TrainConfig::adaptation_defaults(0);
};

void run_adapt(const AdaptOpts& o) {
    Adapter init = load_adapter(o.adapter_path);
    EmbeddingFormat fmt = format_from_string(o.format);
    EmbeddingSet queries = load_embeddings(o.queries_path, fmt);
    EmbeddingSet docs = load_embeddings(o.docs_path, fmt);
    RelevanceJudgments qrels = load_qrels(o.qrels_path);
    NegativeSet negatives = load_negatives(o.negatives_path);
    SplitResult split = load_split(o.split_path);

    TrainConfig cfg = o.cfg;
    cfg.patience = o.patience < 0 ? std::nullopt : std::optional<int>(o.patience);

    std::vector<std::string> train_ids(split.train.begin(), split.train.end());
    if (train_ids.empty()) throw std::runtime_error("split has no training queries");
    ContrastiveBatch train = build_contrastive_batch(train_ids, queries, docs, qrels, negatives);

    std::optional<ContrastiveBatch> val;
    if (cfg.patience) {
        std::vector<std::string> val_ids(split.val.begin(), split.val.end());
        if (val_ids.empty())
            throw std::runtime_error("early stopping needs a non-empty validation split");
        val = build_contrastive_batch(val_ids, queries, docs, qrels, negatives);
    }

    AdaptLoss loss = adapt_loss_from_string(o.loss);
    TrainResult result =
        run_adaptation_stage(init, train, val ? &*val : nullptr, cfg, loss, o.margin);

    AdapterMeta meta = load_adapter_meta(o.adapter_path);
    meta.provenance = {{"stage", "adaptation"},
                       {"initial_adapter", o.adapter_path},
                       {"loss", o.loss},
                       {"train_queries", train_ids.size()},
                       {"learning_rate", cfg.learning_rate},
                       {"weight_decay", cfg.weight_decay},
                       {"batch_size", cfg.batch_size},
                       {"max_epochs", cfg.max_epochs},
                       {"patience", o.patience},
                       {"temperature", cfg.temperature},
                       {"warmup_fraction", cfg.warmup_fraction}};
    save_adapter(result.adapter, o.out_path, meta);
    if (!o.log_path.empty()) write_train_log(result.report, o.log_path);
    std::cout << "adaptation stopped after epoch " << result.report.stop_epoch;
    if (result.report.best_epoch) std::cout << " (best " << *result.report.best_epoch << ")";
    std::cout << "\n";
}

struct RetrieveOpts {
    std::string queries_path, docs_path, format = "packed";
    std::string adapter_path;
    int k = 100;
    uint64_t seed = 0;  // accepted for interface uniformity; retrieval is exact
    std::string split_path, subset;
    std::string out_path, tag = "era";
};

void run_retrieve(const RetrieveOpts& o) {
    EmbeddingFormat fmt = format_from_string(o.format);
    EmbeddingSet queries = load_embeddings(o.queries_path, fmt);
    EmbeddingSet docs = load_embeddings(o.docs_path, fmt);
    if (!o.split_path.empty()) {
        SplitResult split = load_split(o.split_path);
        std::set<std::string> keep;
        if (o.subset == "train" || o.subset == "trainval")
            keep.insert(split.train.begin(), split.train.end());
        if (o.subset == "val" || o.subset == "trainval")
            keep.insert(split.val.begin(), split.val.end());
        if (o.subset == "test") keep = split.test;
        if (keep.empty()) throw std::invalid_argument("unknown subset: " + o.subset);
        std::vector<std::string> ids;
        for (const auto& id : queries.ids)
            if (keep.count(id) != 0) ids.push_back(id);
        queries = queries.subset(ids);
    }
    std::optional<Adapter> adapter;
    if (!o.adapter_path.empty()) adapter = load_adapter(o.adapter_path);
    RetrievalRun run = retrieve_topk(queries, docs, adapter ? &*adapter : nullptr, o.k);
    write_run(run, o.out_path, o.tag);
    std::cout << "retrieved top " << o.k << " for " << run.rankings.size() << " queries\n";
}

struct EvalOpts {
    std::string run_path, qrels_path, tags_path;
    std::string split_path, subset = "test";
    std::string out_path;
    uint64_t seed = 0;  // accepted for interface uniformity
};

void run_eval(const EvalOpts& o) {
    auto [run, run_tag] = read_run(o.run_path);
    RelevanceJudgments qrels = load_qrels(o.qrels_path);
    TaskTag tags = load_tags(o.tags_path);
    if (!o.split_path.empty()) {
        RelevanceJudgments kept = restrict_qrels(qrels, load_split(o.split_path), o.subset);
        RetrievalRun filtered;
        for (auto& [qid, ranking] : run.rankings)
            if (kept.entries.count(qid) != 0) filtered.rankings[qid] = std::move(ranking);
        run = std::move(filtered);
        qrels = std::move(kept);
    }
    if (run.rankings.empty()) throw std::runtime_error("no queries to evaluate");
    MetricsReport report = evaluate_run(run, qrels, tags);
    if (!o.out_path.empty()) save_metrics_report(report, o.out_path);
    char line[160];
    std::snprintf(line, sizeof line,
                  "%s: nDCG@10 %.4f  Recall@100 %.4f  MAP@100 %.4f  (%zu queries, %zu excluded)",
                  run_tag.c_str(), report.overall.ndcg_at_10, report.overall.recall_at_100,
                  report.overall.map_at_100, report.per_query.size(),
                  report.excluded_queries.size());
    std::cout << line << "\n";
}

struct ReportOpts {
    std::vector<std::string> inputs;  // name=report.json
    std::string metric = "ndcg_at_10";
    uint64_t seed = 0;  // accepted for interface uniformity
};

void run_report(const ReportOpts& o) {
    std::vector<std::pair<std::string, MetricsReport>> rows;
    for (const auto& item : o.inputs) {
        auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::invalid_argument("expected name=path, got: " + item);
        rows.emplace_back(item.substr(0, eq), load_metrics_report(item.substr(eq + 1)));
    }
    std::cout << render_table(rows, o.metric);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"linear retrieval adapter toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value file; command-line flags override it");

    SynthOpts synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic embedding dataset");
    synth_cmd->add_option("--out-dir", synth.out_dir, "output directory")->required();
    synth_cmd->add_option("--n-docs", synth.spec.n_docs, "document count");
    synth_cmd->add_option("--n-queries", synth.spec.n_queries, "query count");
    synth_cmd->add_option("--strong-dim", synth.spec.strong_dim, "strong embedder dim");
    synth_cmd->add_option("--weak-dim", synth.spec.weak_dim, "weak embedder dim");
    synth_cmd->add_option("--noise-sigma", synth.spec.noise_sigma, "gaussian noise level");
    synth_cmd->add_option("--clusters", synth.spec.cluster_count, "cluster count");
    synth_cmd->add_option("--tasks", synth.spec.task_count,
                          "task count (clusters grouped mod tasks; 0 = one per cluster)");
    synth_cmd->add_option("--seed", synth.spec.seed, "random seed");
    synth_cmd->add_option("--query-shift", synth.spec.query_shift,
                          "hidden query rotation strength");
    synth_cmd->add_flag("--identity-map", synth.spec.use_identity_map,
                        "hidden map = identity (needs equal dims)");
    synth_cmd->add_option("--near-dups", synth.spec.near_dups_per_positive,
                          "unjudged near-duplicates per positive");
    synth_cmd->add_option("--near-dup-sigma", synth.spec.near_dup_sigma,
                          "noise level of near-duplicates");
    synth_cmd->callback([&] { run_synth(synth); });

    SplitOpts split;
    auto* split_cmd = app.add_subcommand("split", "split judged queries into train/val/test");
    split_cmd->add_option("--qrels", split.qrels_path, "qrels file")->required();
    split_cmd->add_option("--tags", split.tags_path, "task/group tags")->required();
    split_cmd->add_option("--train-ratio", split.spec.train_ratio, "training fraction (0, 0.4]");
    split_cmd->add_option("--seed", split.spec.seed, "random seed");
    split_cmd->add_option("--out", split.out_path, "output split file")->required();
    split_cmd->callback([&] { run_split(split); });

    AlignOpts align;
    auto* align_cmd = app.add_subcommand("align", "self-supervised alignment stage");
    align_cmd->add_option("--q-side", align.q_side, "query-embedder document embeddings")->required();
    align_cmd->add_option("--d-side", align.d_side, "doc-embedder document embeddings")->required();
    align_cmd->add_option("--format", align.format, "packed|lines");
    align_cmd->add_option("--tags", align.tags_path, "tags file (enables per-task sampling)");
    align_cmd->add_option("--per-task", align.per_task, "alignment docs sampled per task");
    align_cmd->add_option("--lr", align.cfg.learning_rate, "learning rate");
    align_cmd->add_option("--weight-decay", align.cfg.weight_decay, "decoupled weight decay");
    align_cmd->add_option("--batch-size", align.cfg.batch_size, "batch size");
    align_cmd->add_option("--epochs", align.cfg.max_epochs, "epoch count");
    align_cmd->add_option("--seed", align.cfg.seed, "random seed");
    align_cmd->add_option("--out", align.out_path, "output adapter")->required();
    align_cmd->add_option("--log", align.log_path, "training log (JSON lines)");
    align_cmd->callback([&] { run_align(align); });

    MineOpts mine;
    auto* mine_cmd = app.add_subcommand("mine", "mine per-query negatives from a run");
    mine_cmd->add_option("--run", mine.run_path, "retrieval run file")->required();
    mine_cmd->add_option("--qrels", mine.qrels_path, "qrels file")->required();
    mine_cmd->add_option("--docs", mine.docs_path, "document embeddings (corpus)")->required();
    mine_cmd->add_option("--format", mine.format, "packed|lines");
    mine_cmd->add_option("--strategy", mine.strategy, "topk_percpos|naive_topk|random");
    mine_cmd->add_option("--pool-size", mine.pool_size, "candidate pool depth");
    mine_cmd->add_option("--perc", mine.perc, "false-negative guard fraction (0, 1]");
    mine_cmd->add_option("--k", mine.k, "negatives per query");
    mine_cmd->add_option("--seed", mine.seed, "random seed");
    mine_cmd->add_option("--split", mine.split_path, "restrict to a split file");
    mine_cmd->add_option("--subset", mine.subset, "train|val|test|trainval");
    mine_cmd->add_option("--queries", mine.queries_path,
                         "query embeddings (scores positives missing from the run)");
    mine_cmd->add_option("--adapter", mine.adapter_path, "adapter for the fallback scorer");
    mine_cmd->add_option("--out", mine.out_path, "output negatives (JSON lines)")->required();
    mine_cmd->callback([&] { run_mine(mine); });

    AdaptOpts adapt;
    auto* adapt_cmd = app.add_subcommand("adapt", "label-based contrastive adaptation stage");
    adapt_cmd->add_option("--adapter", adapt.adapter_path, "initial adapter")->required();
    adapt_cmd->add_option("--queries", adapt.queries_path, "query embeddings")->required();
    adapt_cmd->add_option("--docs", adapt.docs_path, "document embeddings")->required();
    adapt_cmd->add_option("--format", adapt.format, "packed|lines");
    adapt_cmd->add_option("--qrels", adapt.qrels_path, "qrels file")->required();
    adapt_cmd->add_option("--negatives", adapt.negatives_path, "mined negatives")->required();
    adapt_cmd->add_option("--split", adapt.split_path, "split file")->required();
    adapt_cmd->add_option("--loss", adapt.loss, "infonce|triplet");
    adapt_cmd->add_option("--margin", adapt.margin, "triplet margin");
    adapt_cmd->add_option("--temperature", adapt.cfg.temperature, "InfoNCE temperature");
    adapt_cmd->add_option("--lr", adapt.cfg.learning_rate, "learning rate");
    adapt_cmd->add_option("--weight-decay", adapt.cfg.weight_decay, "decoupled weight decay");
    adapt_cmd->add_option("--batch-size", adapt.cfg.batch_size, "batch size");
    adapt_cmd->add_option("--max-epochs", adapt.cfg.max_epochs, "epoch ceiling");
    adapt_cmd->add_option("--patience", adapt.patience, "early-stop patience; negative disables");
    adapt_cmd->add_option("--warmup", adapt.cfg.warmup_fraction, "linear warmup fraction");
    adapt_cmd->add_option("--seed", adapt.cfg.seed, "random seed");
    adapt_cmd->add_option("--out", adapt.out_path, "output adapter")->required();
    adapt_cmd->add_option("--log", adapt.log_path, "training log (JSON lines)");
    adapt_cmd->callback([&] { run_adapt(adapt); });

    RetrieveOpts retrieve;
    auto* retrieve_cmd = app.add_subcommand("retrieve", "brute-force top-k retrieval");
    retrieve_cmd->add_option("--queries", retrieve.queries_path, "query embeddings")->required();
    retrieve_cmd->add_option("--docs", retrieve.docs_path, "document embeddings")->required();
    retrieve_cmd->add_option("--format", retrieve.format, "packed|lines");
    retrieve_cmd->add_option("--adapter", retrieve.adapter_path, "adapter (omit for zero-shot)");
    retrieve_cmd->add_option("--k", retrieve.k, "depth");
    retrieve_cmd->add_option("--split", retrieve.split_path, "restrict queries to a split file");
    retrieve_cmd->add_option("--subset", retrieve.subset, "train|val|test|trainval");
    retrieve_cmd->add_option("--seed", retrieve.seed, "accepted for uniformity; unused");
    retrieve_cmd->add_option("--out", retrieve.out_path, "output run file")->required();
    retrieve_cmd->add_option("--tag", retrieve.tag, "run tag");
    retrieve_cmd->callback([&] { run_retrieve(retrieve); });

    EvalOpts eval;
    auto* eval_cmd = app.add_subcommand("eval", "score a run against qrels");
    eval_cmd->add_option("--run", eval.run_path, "run file")->required();
    eval_cmd->add_option("--qrels", eval.qrels_path, "qrels file")->required();
    eval_cmd->add_option("--tags", eval.tags_path, "task/group tags")->required();
    eval_cmd->add_option("--split", eval.split_path, "restrict to a split file");
    eval_cmd->add_option("--subset", eval.subset, "train|val|test|trainval");
    eval_cmd->add_option("--out", eval.out_path, "output report (JSON)");
    eval_cmd->add_option("--seed", eval.seed, "accepted for uniformity; unused");
    eval_cmd->callback([&] { run_eval(eval); });

    ReportOpts report;
    auto* report_cmd = app.add_subcommand("report", "render a comparison table");
    report_cmd->add_option("--in", report.inputs, "name=report.json (repeatable)")->required();
    report_cmd->add_option("--metric", report.metric, "ndcg_at_10|recall_at_100|map_at_100");
    report_cmd->add_option("--seed", report.seed, "accepted for uniformity; unused");
    report_cmd->callback([&] { run_report(report); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
