// Acceptance gate for the retrieval engine. Runs nine independent checks,
// prints exactly one PASS/FAIL line per check, and exits nonzero if any
// fail. Tolerances and time budgets are pinned here, not configurable.
//
// Project headers pull in Eigen and must be included before httplib.h,
// which drags in resolv.h and its `_res` macro.
#include "gar/embedder.hpp"
#include "gar/embedding.hpp"
#include "gar/errors.hpp"
#include "gar/eval.hpp"
#include "gar/ingest.hpp"
#include "gar/knowledge_base.hpp"
#include "gar/query.hpp"
#include "gar/retrieval.hpp"
#include "gar/service.hpp"
#include "gar/snippet.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

namespace {

namespace fs = std::filesystem;

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& message) {
    if (!ok) {
        throw Failure(message);
    }
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("gar_accept_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

struct CmdResult {
    int exit_code = -1;
    std::string out;
};

CmdResult run_cli(const std::string& args) {
    static int serial = 0;
    const fs::path out_path =
        fs::temp_directory_path() /
        ("gar_accept_cli_" + std::to_string(::getpid()) + "_" + std::to_string(serial++));
    const std::string cmd =
        std::string(GAR_CLI_BIN) + " " + args + " >\"" + out_path.string() + "\" 2>/dev/null";
    const int raw = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream in(out_path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    std::error_code ec;
    fs::remove(out_path, ec);
    return r;
}

gar::Snippet content_snippet(gar::SnippetId id, std::string content,
                             gar::Category cat = gar::Category::other) {
    gar::Snippet s;
    s.id = id;
    s.metadata = {"hypertension", "Acceptance Fixture", 2022, "UNIT"};
    s.text = {"", "", std::move(content), gar::ContentKind::text};
    s.category = cat;
    return s;
}

std::vector<int> support_of(const gar::Vec& v) {
    std::vector<int> idx;
    for (int i = 0; i < v.size(); ++i) {
        if (v[i] != 0.0) {
            idx.push_back(i);
        }
    }
    return idx;
}

// Greedily picks tokens whose embeddings occupy hash buckets unused by any
// previously accepted token (and by `forbidden`), so every accepted text is
// exactly orthogonal to all others under the given embedder.
std::vector<std::string> orthogonal_tokens(const gar::Embedder& embedder, size_t count,
                                           const std::function<std::string(const std::string&)>& text_of,
                                           std::set<int> forbidden) {
    std::vector<std::string> tokens;
    for (int cand = 0; tokens.size() < count; ++cand) {
        require(cand < 20000, "token search exhausted before finding a disjoint set");
        const std::string tok = "plant" + std::to_string(cand);
        const auto buckets = support_of(embedder.embed(text_of(tok)));
        bool clash = buckets.empty();
        for (int b : buckets) {
            if (forbidden.count(b) != 0) {
                clash = true;
            }
        }
        if (clash) {
            continue;
        }
        forbidden.insert(buckets.begin(), buckets.end());
        tokens.push_back(tok);
    }
    return tokens;
}

double manual_dot(const gar::Vec& a, const gar::Vec& b) {
    double s = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

// --------------------------------------------------------------------------
// 1. Ranked metrics vs. brute-force recomputation
// --------------------------------------------------------------------------

double oracle_precision(const std::vector<bool>& flags, size_t K) {
    size_t correct = 0;
    for (size_t i = 0; i < K && i < flags.size(); ++i) {
        correct += flags[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(K);
}

double oracle_hits(const std::vector<std::vector<bool>>& per_query, size_t K) {
    size_t hit = 0;
    for (const auto& f : per_query) {
        for (size_t i = 0; i < K && i < f.size(); ++i) {
            if (f[i]) {
                ++hit;
                break;
            }
        }
    }
    return static_cast<double>(hit) / static_cast<double>(per_query.size());
}

double oracle_mrr(const std::vector<std::optional<int>>& ranks) {
    double total = 0.0;
    for (const auto& r : ranks) {
        if (r) {
            total += 1.0 / static_cast<double>(*r);
        }
    }
    return total / static_cast<double>(ranks.size());
}

std::string criterion_metrics_oracle() {
    std::mt19937 rng(20240901);
    std::uniform_int_distribution<int> flag_len(0, 15);
    std::uniform_int_distribution<int> query_count(1, 6);
    std::uniform_int_distribution<int> query_len(0, 12);
    std::uniform_int_distribution<int> rank_count(1, 8);
    std::uniform_int_distribution<int> rank_value(1, 10);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    size_t comparisons = 0;
    for (int instance = 0; instance < 1000; ++instance) {
        const double p = unit(rng);
        auto draw_flags = [&](int len) {
            std::vector<bool> f(static_cast<size_t>(len));
            for (auto&& bit : f) {
                bit = unit(rng) < p;
            }
            return f;
        };

        const std::vector<bool> flags = draw_flags(flag_len(rng));
        std::vector<std::vector<bool>> per_query(static_cast<size_t>(query_count(rng)));
        for (auto& f : per_query) {
            f = draw_flags(query_len(rng));
        }
        std::vector<std::optional<int>> ranks(static_cast<size_t>(rank_count(rng)));
        for (auto& r : ranks) {
            r = unit(rng) < 0.25 ? std::nullopt : std::optional<int>(rank_value(rng));
        }

        for (size_t K : {size_t{1}, size_t{3}, size_t{5}, size_t{10}}) {
            const double lib_p = gar::precision_at_k(flags, K);
            const double ref_p = oracle_precision(flags, K);
            require(lib_p == ref_p, "precision@" + std::to_string(K) + " diverged at instance " +
                                        std::to_string(instance) + ": " + fmt(lib_p) + " vs " +
                                        fmt(ref_p));
            const double lib_h = gar::hits_at_k(per_query, K);
            const double ref_h = oracle_hits(per_query, K);
            require(lib_h == ref_h, "hits@" + std::to_string(K) + " diverged at instance " +
                                        std::to_string(instance));
            comparisons += 2;
        }
        const double lib_m = gar::mrr(ranks);
        const double ref_m = oracle_mrr(ranks);
        require(lib_m == ref_m, "mrr diverged at instance " + std::to_string(instance) + ": " +
                                    fmt(lib_m) + " vs " + fmt(ref_m));
        ++comparisons;
    }
    return "1000 instances, " + std::to_string(comparisons) + " exact comparisons";
}

// --------------------------------------------------------------------------
// 2. Top-k retrieval vs. exhaustive rescoring
// --------------------------------------------------------------------------

std::string criterion_topk_oracle() {
    std::mt19937 rng(771177);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> n_dist(1, 1000);
    std::uniform_int_distribution<int> k_dist(1, 20);
    std::uniform_real_distribution<double> tau_dist(-0.2, 0.9);
    const int dims[] = {16, 64, 256};

    auto random_unit = [&](int dim) {
        gar::Vec v(dim);
        for (int i = 0; i < dim; ++i) {
            v[i] = gauss(rng);
        }
        return gar::l2_normalize(v);
    };

    size_t total_snippets = 0;
    for (int corpus = 0; corpus < 100; ++corpus) {
        const int dim = dims[corpus % 3];
        const int n = n_dist(rng);
        total_snippets += static_cast<size_t>(n);

        gar::KnowledgeBase kb;
        for (int i = 0; i < n; ++i) {
            gar::Snippet s = content_snippet(static_cast<gar::SnippetId>(i + 1),
                                             "snippet " + std::to_string(i + 1));
            s.embedding = random_unit(dim);
            kb.add(std::move(s));
        }

        const gar::Vec q = random_unit(dim);
        gar::RetrievalConfig cfg;
        cfg.k = static_cast<size_t>(k_dist(rng));
        cfg.tau = tau_dist(rng);

        const auto got = gar::match_topk(q, kb, cfg);

        // Exhaustive reference: score everything, stable-sort by score only.
        // Snippets are stored in ascending-id order, so stability yields the
        // ascending-id tie rule without restating it in the comparator.
        struct Hit {
            double score;
            gar::SnippetId id;
        };
        std::vector<Hit> all;
        for (const auto& s : kb.snippets()) {
            const double score = gar::cosine_similarity(q, *s.embedding);
            if (score >= cfg.tau) {
                all.push_back({score, s.id});
            }
        }
        std::stable_sort(all.begin(), all.end(),
                         [](const Hit& a, const Hit& b) { return a.score > b.score; });
        if (all.size() > cfg.k) {
            all.resize(cfg.k);
        }

        require(got.size() == all.size(), "corpus " + std::to_string(corpus) + ": got " +
                                              std::to_string(got.size()) + " hits, expected " +
                                              std::to_string(all.size()));
        for (size_t i = 0; i < got.size(); ++i) {
            require(got[i].snippet_id == all[i].id,
                    "corpus " + std::to_string(corpus) + ": id mismatch at position " +
                        std::to_string(i));
            require(got[i].score == all[i].score,
                    "corpus " + std::to_string(corpus) + ": score mismatch at position " +
                        std::to_string(i));
            require(got[i].rank == static_cast<int>(i + 1),
                    "corpus " + std::to_string(corpus) + ": rank not contiguous");
        }
    }
    return "100 corpora (dims 16/64/256), " + std::to_string(total_snippets) +
           " snippets rescored exhaustively";
}

// --------------------------------------------------------------------------
// 3. Closed-form weighting and similarity identities
// --------------------------------------------------------------------------

std::string criterion_closed_forms() {
    // Decay weights for day offsets {10, 20} at rate 0.1. Six-digit pins
    // within 1e-6, full closed form within 1e-12.
    const auto w = gar::time_decay_weights({10.0, 20.0}, 0.1);
    require(w.size() == 2, "expected two weights");
    require(std::abs(w[0] - 0.731059) <= 1e-6, "w0 " + fmt(w[0]) + " not within 1e-6 of 0.731059");
    require(std::abs(w[1] - 0.268941) <= 1e-6, "w1 " + fmt(w[1]) + " not within 1e-6 of 0.268941");
    const double e = std::exp(-1.0);
    require(std::abs(w[0] - 1.0 / (1.0 + e)) <= 1e-12, "w0 deviates from closed form");
    require(std::abs(w[1] - e / (1.0 + e)) <= 1e-12, "w1 deviates from closed form");

    // Weights always sum to 1 within 1e-9, including extreme offsets.
    std::mt19937 rng(5150);
    std::uniform_int_distribution<int> len_dist(1, 6);
    std::uniform_real_distribution<double> day_dist(0.0, 1e6);
    size_t sum_checks = 0;
    for (double lambda : {0.01, 0.1, 1.0, 5.0}) {
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> days(static_cast<size_t>(len_dist(rng)));
            for (auto& d : days) {
                d = day_dist(rng);
            }
            const auto weights = gar::time_decay_weights(days, lambda);
            double sum = 0.0;
            for (double x : weights) {
                require(x >= 0.0 && x <= 1.0 + 1e-12, "weight out of [0,1]");
                sum += x;
            }
            require(std::abs(sum - 1.0) <= 1e-9,
                    "weights sum to " + fmt(sum) + " at lambda " + fmt(lambda));
            ++sum_checks;
        }
        const auto extreme = gar::time_decay_weights({0.0, 1e6}, lambda);
        double sum = extreme[0] + extreme[1];
        require(std::abs(sum - 1.0) <= 1e-9, "extreme-offset weights do not sum to 1");
        ++sum_checks;
    }

    // Hand-computed cosine: (1,2,2).(2,1,2) = 8, both norms 3, so 8/9.
    gar::Vec a(3), b(3);
    a << 1.0, 2.0, 2.0;
    b << 2.0, 1.0, 2.0;
    const double cos = gar::cosine_similarity(a, b);
    require(std::abs(cos - 8.0 / 9.0) <= 1e-12, "cosine " + fmt(cos) + " not within 1e-12 of 8/9");

    return "decay pins + " + std::to_string(sum_checks) + " sum checks + cosine 8/9";
}

// --------------------------------------------------------------------------
// 4. Retrieved payloads byte-identical to stored snippets
// --------------------------------------------------------------------------

std::string criterion_verbatim_payloads() {
    const std::vector<std::string> vocab = {
        "pressure", "blood",    "therapy",  "dose",     "renal",   "cardiac", "risk",
        "monitor",  "treatment", "clinic",  "sodium",   "intake",  "exercise", "weekly",
        "review",   "target",   "systolic", "diastolic", "aspirin", "statin",  "diet",
        "weight",   "glucose",  "screening", "follow",  "visit",   "adjust",  "titrate",
        "measure",  "record",   "assess",   "plan",     "urgent",  "routine", "chronic",
        "acute",    "adult",    "elderly",  "pregnancy", "control"};
    std::mt19937 rng(31337);
    std::uniform_int_distribution<size_t> word(0, vocab.size() - 1);
    std::uniform_int_distribution<int> n_dist(2, 12);
    std::uniform_int_distribution<int> content_len(3, 12);
    std::uniform_int_distribution<int> query_len(2, 6);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    auto words = [&](int count, bool allow_newline) {
        std::string text;
        for (int i = 0; i < count; ++i) {
            if (i > 0) {
                text += (allow_newline && unit(rng) < 0.15) ? "\n" : " ";
            }
            text += vocab[word(rng)];
        }
        return text;
    };

    gar::DiagnosticOutput diag;
    diag.entries.push_back({"I10", "Essential hypertension"});

    size_t recommendations = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const int n = n_dist(rng);
        gar::KnowledgeBase kb;
        for (int i = 0; i < n; ++i) {
            gar::Snippet s;
            s.id = static_cast<gar::SnippetId>(i + 1);
            s.metadata = {"hypertension", "Verbatim Fixture", 2020 + (i % 5), "UNIT"};
            s.text = {unit(rng) < 0.5 ? "" : words(2, false), unit(rng) < 0.5 ? "" : words(2, false),
                      words(content_len(rng), true), gar::ContentKind::text};
            s.category = static_cast<gar::Category>(i % 4);
            if (unit(rng) < 0.3) {
                s.extras = {{"CoR", "I"}, {"LoE", "B"}};
            }
            kb.add(std::move(s));
        }
        const gar::HashEmbedder embedder(32, static_cast<std::uint64_t>(1000 + trial));
        kb.embed_all(embedder);

        gar::RetrievalConfig cfg;
        cfg.k = 1 + static_cast<size_t>(rng() % static_cast<unsigned>(n));
        cfg.tau = unit(rng) < 0.5 ? -1.0 : -0.5 + 0.8 * unit(rng);
        const double dedups[] = {0.85, 0.95, 1.01};
        cfg.dedup_threshold = dedups[rng() % 3];
        if (unit(rng) < 0.33) {
            cfg.context = static_cast<gar::Category>(rng() % 4);
            cfg.context_boost = 1.0 + 0.5 * unit(rng);
        }

        const gar::Vec q = embedder.embed(words(query_len(rng), false));
        const auto hits = gar::match_topk(q, kb, cfg, embedder.fingerprint());
        const auto out = gar::fuse(diag, hits, kb, cfg);
        const auto rendered = nlohmann::json::parse(gar::render_system_output(out));

        for (size_t i = 0; i < out.recommendations.size(); ++i) {
            const auto& rec = out.recommendations[i];
            const gar::Snippet* stored = kb.find(rec.scored.snippet_id);
            require(stored != nullptr, "trial " + std::to_string(trial) + ": unknown snippet id");
            require(rec.snippet == *stored,
                    "trial " + std::to_string(trial) + ": fused payload differs from stored snippet");
            require(rec.snippet.text.content == stored->text.content,
                    "trial " + std::to_string(trial) + ": content bytes differ");
            require(rec.provenance == gar::metadata_canonical_string(stored->metadata),
                    "trial " + std::to_string(trial) + ": provenance differs");
            const auto& rj = rendered.at("recommendations").at(i);
            require(rj.at("content").get<std::string>() == stored->text.content,
                    "trial " + std::to_string(trial) + ": rendered content bytes differ");
            ++recommendations;
        }
    }
    require(recommendations >= 500, "property exercised too few recommendations");
    return "500 pipelines, " + std::to_string(recommendations) + " payloads compared byte-for-byte";
}

// --------------------------------------------------------------------------
// 5. Planted corpus retrieves every target at rank one
// --------------------------------------------------------------------------

std::string criterion_planted_corpus() {
    const gar::HashEmbedder embedder(256, 7);
    const auto tokens =
        orthogonal_tokens(embedder, 60, [](const std::string& t) { return t; }, {});

    gar::KnowledgeBase kb;
    for (size_t i = 0; i < tokens.size(); ++i) {
        kb.add(content_snippet(static_cast<gar::SnippetId>(i + 1), tokens[i],
                               static_cast<gar::Category>(i % 4)));
    }
    kb.embed_all(embedder);

    std::vector<gar::GroundTruthCase> cases;
    for (int j = 0; j < 20; ++j) {
        const size_t target_index = static_cast<size_t>(3 * j);
        gar::GroundTruthCase c;
        c.case_id = "case-" + std::to_string(j);
        c.query.current = {gar::RecordKind::current, gar::parse_date("2024-03-15"),
                           tokens[target_index]};
        c.relevant_ids = {static_cast<gar::SnippetId>(target_index + 1)};
        cases.push_back(std::move(c));
    }

    // Independent similarity audit: each query embeds to the same bucket set
    // as its target and to a disjoint set from everything else, so the target
    // cosine must be 1 and every other cosine exactly 0.
    for (const auto& c : cases) {
        const gar::Vec q = embedder.embed(c.query.current.text);
        for (const auto& s : kb.snippets()) {
            const double d = manual_dot(q, *s.embedding);
            if (s.id == c.relevant_ids[0]) {
                require(std::abs(d - 1.0) <= 1e-9,
                        c.case_id + ": target cosine " + fmt(d) + " is not 1");
            } else {
                require(d == 0.0, c.case_id + ": off-target cosine " + fmt(d) + " is not 0");
            }
        }
    }

    gar::RetrievalConfig cfg;
    cfg.k = 5;
    cfg.tau = 0.25;
    const gar::WeightingConfig weighting;
    const auto report =
        gar::evaluate_corpus(cases, kb, embedder, cfg, weighting, gar::CorrectnessCriterion{});

    require(report.errors.empty(), "evaluation recorded case errors");
    require(report.n == 20, "expected 20 evaluated cases, got " + std::to_string(report.n));
    require(report.precision_at.at(1) == 1.0,
            "precision@1 " + fmt(report.precision_at.at(1)) + " != 1.0");
    require(report.mrr == 1.0, "mrr " + fmt(report.mrr) + " != 1.0");
    require(report.hits_at.at(3) == 1.0, "hits@3 " + fmt(report.hits_at.at(3)) + " != 1.0");

    return "20 cases over 60 snippets: precision@1 = mrr = hits@3 = 1.0";
}

// --------------------------------------------------------------------------
// 6. Query-enrichment arms order as expected on planted cases
// --------------------------------------------------------------------------

std::string criterion_enrichment_ordering() {
    const gar::HashEmbedder embedder(256, 11);
    const std::string diag_text = "Z71.9 counseling";
    const std::string filler = "routine follow up visit";
    auto triple = [](const std::string& tok) { return tok + " " + tok + " " + tok; };

    // Buckets reachable from the shared diagnosis text, the filler, and their
    // concatenation (which adds the cross-boundary bigram) are off-limits to
    // snippet tokens, so those query parts score exactly 0 everywhere.
    std::set<int> forbidden;
    for (const std::string& text : {diag_text, filler, diag_text + " " + filler}) {
        const auto buckets = support_of(embedder.embed(text));
        forbidden.insert(buckets.begin(), buckets.end());
    }
    const auto tokens = orthogonal_tokens(embedder, 30, triple, forbidden);

    gar::KnowledgeBase kb;
    for (size_t i = 0; i < tokens.size(); ++i) {
        kb.add(content_snippet(static_cast<gar::SnippetId>(i + 1), triple(tokens[i]),
                               static_cast<gar::Category>(i % 4)));
    }
    kb.embed_all(embedder);

    gar::DiagnosticOutput diag;
    diag.entries.push_back({"Z71.9", "counseling"});

    // Cases 0-11 carry their signal in the current record; cases 12-19 carry
    // it only in one historical record, with off-corpus filler as the current
    // text. Every case shares the same diagnosis.
    std::vector<gar::GroundTruthCase> cases;
    for (int j = 0; j < 20; ++j) {
        const bool history_sensitive = j >= 12;
        gar::GroundTruthCase c;
        c.case_id = (history_sensitive ? "history-" : "current-") + std::to_string(j);
        c.query.diagnosis = diag;
        c.query.current = {gar::RecordKind::current, gar::parse_date("2024-03-15"),
                           history_sensitive ? filler : triple(tokens[static_cast<size_t>(j)])};
        if (history_sensitive) {
            c.query.history.push_back({gar::RecordKind::historical, gar::parse_date("2024-03-01"),
                                       triple(tokens[static_cast<size_t>(j)])});
        }
        c.relevant_ids = {static_cast<gar::SnippetId>(j + 1)};
        cases.push_back(std::move(c));
    }

    gar::RetrievalConfig cfg;
    cfg.k = 5;
    cfg.tau = 0.2;
    const gar::WeightingConfig weighting;

    // Independent audit of the full-query arm: the target must win by a wide
    // margin for every case before the harness result means anything.
    for (const auto& c : cases) {
        const auto composed =
            gar::compose_query(c.query.diagnosis, c.query.current, c.query.history, weighting);
        const gar::Vec q = gar::embed_query(composed, embedder);
        double best = -2.0, runner_up = -2.0;
        gar::SnippetId best_id = 0;
        for (const auto& s : kb.snippets()) {
            const double d = manual_dot(q, *s.embedding);
            if (d > best) {
                runner_up = best;
                best = d;
                best_id = s.id;
            } else if (d > runner_up) {
                runner_up = d;
            }
        }
        require(best_id == c.relevant_ids[0], c.case_id + ": full query does not rank its target first");
        require(best >= 0.5, c.case_id + ": target cosine " + fmt(best) + " below 0.5");
        require(runner_up <= 0.25, c.case_id + ": runner-up cosine " + fmt(runner_up) + " above 0.25");
        require(best - runner_up >= 0.3, c.case_id + ": winning margin below 0.3");
    }

    const auto arms =
        gar::run_ablation(cases, kb, embedder, cfg, weighting, gar::CorrectnessCriterion{});
    require(arms.size() == 3, "expected three arms");
    require(arms[0].name == "diagnosis_only" && arms[1].name == "diagnosis_current" &&
                arms[2].name == "diagnosis_current_history",
            "unexpected arm names");

    const double p_a = arms[0].report.precision_at.at(1);
    const double p_c = arms[2].report.precision_at.at(1);
    require(p_a < p_c, "diagnosis-only precision@1 " + fmt(p_a) + " not below full " + fmt(p_c));
    require(p_a == 0.0, "diagnosis-only precision@1 expected 0, got " + fmt(p_a));
    require(p_c == 1.0, "full-query precision@1 expected 1, got " + fmt(p_c));

    const std::vector<gar::GroundTruthCase> history_subset(cases.begin() + 12, cases.end());
    const auto subset_arms =
        gar::run_ablation(history_subset, kb, embedder, cfg, weighting, gar::CorrectnessCriterion{});
    const double sub_b = subset_arms[1].report.precision_at.at(1);
    const double sub_c = subset_arms[2].report.precision_at.at(1);
    require(sub_c >= sub_b, "history subset: full arm " + fmt(sub_c) + " below current arm " +
                                fmt(sub_b));
    require(sub_b == 0.0 && sub_c == 1.0,
            "history subset expected 0 vs 1, got " + fmt(sub_b) + " vs " + fmt(sub_c));

    const std::string table = gar::render_ablation_table(arms);
    for (const char* name : {"diagnosis_only", "diagnosis_current", "diagnosis_current_history"}) {
        require(table.find(name) != std::string::npos,
                std::string("rendered table is missing row '") + name + "'");
    }

    return "precision@1: diagnosis-only 0.0 < full 1.0; history subset 0.0 <= 1.0; 3-row table";
}

// --------------------------------------------------------------------------
// 7. Extraction comparison rates, including fine-grained coverage
// --------------------------------------------------------------------------

std::string criterion_extraction_rates() {
    std::vector<gar::Snippet> refs;
    const char* ref_contents[] = {
        "Restrict dietary sodium to less than five grams per day.",
        "Offer structured exercise programs to all adults with elevated pressure.",
        "Combination therapy is recommended as initial treatment for most patients requiring drugs.",
        "Measure blood pressure in both arms at the first assessment and use the higher reading.",
        "Reassess cardiovascular risk annually using a validated scoring system.",
        "Pregnant women with chronic hypertension need specialist review within two weeks.",
    };
    for (size_t i = 0; i < 6; ++i) {
        refs.push_back(content_snippet(static_cast<gar::SnippetId>(i + 1), ref_contents[i]));
    }

    const auto identity = gar::extraction_metrics(refs, refs);
    require(identity.precision_pct == 100.0, "identity precision != 100");
    require(identity.hit_rate_pct == 100.0, "identity hit rate != 100");
    require(identity.coverage_pct == 100.0, "identity coverage != 100");

    // Ten fine-grained candidates over six references: eight are substrings
    // of a reference (two references split into two fragments each), two are
    // stray, and one reference stays uncovered.
    std::vector<gar::Snippet> cands;
    const char* cand_contents[] = {
        "Restrict dietary sodium to less than five grams per day.",
        "Offer structured exercise programs",
        "Combination therapy is recommended",
        "initial treatment for most patients",
        "Measure blood pressure in both arms",
        "use the higher reading",
        "Reassess  cardiovascular   risk annually",
        "validated scoring system.",
        "Totally unrelated text about scheduling parking.",
        "Another stray fragment with no counterpart.",
    };
    for (size_t i = 0; i < 10; ++i) {
        cands.push_back(content_snippet(static_cast<gar::SnippetId>(100 + i), cand_contents[i]));
    }

    const auto report = gar::extraction_metrics(cands, refs);
    require(report.candidate_total == 10 && report.reference_total == 6, "fixture totals wrong");
    require(report.matched_candidates == 8,
            "expected 8 matched candidates, got " + std::to_string(report.matched_candidates));
    require(report.matched_references == 5,
            "expected 5 matched references, got " + std::to_string(report.matched_references));
    require(std::abs(report.precision_pct - 80.0) <= 1e-9,
            "precision " + fmt(report.precision_pct) + " != 80");
    require(std::abs(report.hit_rate_pct - 500.0 / 6.0) <= 1e-9,
            "hit rate " + fmt(report.hit_rate_pct) + " != 83.33");
    require(std::abs(report.coverage_pct - 166.67) <= 0.01,
            "coverage " + fmt(report.coverage_pct) + " not within 0.01 of 166.67");

    return "identity 100/100/100; fine-grained fixture 80.0 / 83.3 / " + fmt(report.coverage_pct);
}

// --------------------------------------------------------------------------
// 8. Correctness criteria agree with hand labels
// --------------------------------------------------------------------------

std::string criterion_hand_labels() {
    struct LabeledPair {
        const char* candidate;
        const char* reference;
        bool exact;    // shares at least one whitespace-collapsed sentence
        bool semantic; // token F1 >= 0.72
    };
    // F1 values noted where they sit away from the obvious extremes.
    const LabeledPair pairs[] = {
        // Shared sentence and high token overlap.
        {"Measure blood pressure at every visit.", "Measure blood pressure at every visit.", true, true},
        {"Measure  blood   pressure at every visit.", "Measure blood pressure at every visit.", true, true},
        {"Start a low dose ACE inhibitor.",
         "Start a low dose ACE inhibitor. Titrate the dose weekly.", true, true}, // F1 = 0.75
        {"Check renal function now. Repeat the test in two weeks.",
         "Repeat the test in two weeks.", true, true}, // F1 = 0.75
        {"Limit alcohol. Exercise daily.", "Limit alcohol. Exercise daily.", true, true},
        {"Give aspirin after the first trimester. Review the risks.",
         "Give aspirin after the first trimester. Review the benefits.", true, true}, // F1 = 8/9
        {"Target below 140 over 90. Reassess in 3 months.",
         "Target below 140 over 90. Reassess in 3 months.", true, true},
        {"Advise a low sodium diet rich in vegetables.",
         "Advise a low sodium diet rich in vegetables. Review adherence monthly.", true, true}, // 16/19

        // No shared sentence, but token overlap at or above the threshold.
        {"Offer dietary advice to all patients", "Offer dietary advice, to all patients.", false, true},
        {"patients need counseling about adherence", "Patients need counseling about adherence",
         false, true}, // case-sensitive sentences, case-folded tokens
        {"Reduce salt intake to below five grams daily",
         "Reduce salt intake to below six grams daily", false, true}, // F1 = 7/8
        {"Schedule follow up in four weeks", "In four weeks schedule follow up", false, true},
        {"Evaluate cardiac risk using the standard scoring model every year",
         "Evaluate cardiac risk using the updated scoring model every visit", false, true}, // 0.8
        {"Aim for systolic pressure under 130 mmHg",
         "Aim for systolic pressure under 130 mmHg if tolerated", false, true}, // F1 = 0.875
        {"Monitor glucose levels during steroid therapy",
         "Monitor glucose level during steroid therapy", false, true}, // F1 = 5/6

        // Shared sentence inside a much longer text: exact yes, semantic no.
        {"Stop smoking.",
         "Stop smoking. Comprehensive cessation support including nicotine replacement therapy "
         "counseling behavioral programs and regular follow up visits should be offered to every "
         "patient presenting with additional cardiovascular risk factors.", true, false}, // 4/31
        {"Check potassium after one week. Repeat in a month.",
         "Check potassium after one week.", true, false}, // F1 = 10/14
        {"Arrange home monitoring.", "Discuss treatment options. Arrange home monitoring.",
         true, false}, // F1 = 2/3
        {"Record weight at each appointment.",
         "Record weight at each appointment. Note any rapid gain.", true, false}, // F1 = 10/14
        {"Refer to a specialist clinic. Provide written education materials covering diet exercise "
         "weight targets and warning signs requiring urgent review.",
         "Refer to a specialist clinic.", true, false}, // F1 = 0.4

        // Neither criterion fires.
        {"Order a renal ultrasound", "Prescribe beta blockers", false, false},
        {"Avoid grapefruit juice", "Encourage regular walking", false, false},
        {"Discuss smoking cessation at this visit", "Discuss vaccination schedule at next review",
         false, false}, // F1 = 1/3
        {"The patient should restrict caffeine and alcohol intake",
         "The patient may continue moderate exercise without restriction", false, false}, // 0.25
        {"Target 120 mmHg within 6 months", "Schedule 3 visits over 12 weeks", false, false},
        {"Assess fall risk in elderly patients annually",
         "Assess bleeding risk before anticoagulation therapy begins", false, false}, // F1 = 2/7
        {"No added salt", "Weigh the patient", false, false},
        {"Review current medication list for interactions today",
         "Review current allergy list for documentation gaps", false, false}, // F1 = 4/7
        {"Begin insulin therapy.", "Consider dietary changes. Reassess in three months.",
         false, false},
        {"Stop the infusion immediately", "Continue the infusion as planned", false, false}, // 0.44
    };
    static_assert(sizeof(pairs) / sizeof(pairs[0]) == 30);

    gar::CorrectnessCriterion exact_criterion;
    exact_criterion.mode = gar::CriterionMode::exact_sentence_overlap;
    const gar::CorrectnessCriterion semantic_criterion; // semantic, theta 0.72, default scorer

    int exact_agreed = 0, semantic_agreed = 0;
    std::string first_miss;
    for (size_t i = 0; i < 30; ++i) {
        const auto& p = pairs[i];
        const bool got_exact = exact_criterion.matches(p.candidate, p.reference);
        const bool got_semantic = semantic_criterion.matches(p.candidate, p.reference);
        if (got_exact == p.exact) {
            ++exact_agreed;
        } else if (first_miss.empty()) {
            first_miss = "pair " + std::to_string(i) + " exact: got " +
                         (got_exact ? "true" : "false");
        }
        if (got_semantic == p.semantic) {
            ++semantic_agreed;
        } else if (first_miss.empty()) {
            first_miss = "pair " + std::to_string(i) + " semantic: got " +
                         (got_semantic ? "true" : "false");
        }
    }
    require(exact_agreed == 30 && semantic_agreed == 30,
            "agreement " + std::to_string(exact_agreed) + "/30 exact, " +
                std::to_string(semantic_agreed) + "/30 semantic (" + first_miss + ")");
    return "30/30 exact-overlap and 30/30 semantic decisions at theta 0.72";
}

// --------------------------------------------------------------------------
// 9. Persistence round-trip and CLI/HTTP parity
// --------------------------------------------------------------------------

struct ServiceRunner {
    gar::QueryService svc;
    std::thread worker;
    int port = 0;

    ServiceRunner(const gar::KnowledgeBase& kb, std::shared_ptr<const gar::Embedder> embedder,
                  gar::RetrievalConfig retrieval, gar::WeightingConfig weighting)
        : svc(kb, std::move(embedder), retrieval, weighting) {
        port = svc.bind_any_port("127.0.0.1");
        worker = std::thread([this] { svc.listen_after_bind(); });
        for (int i = 0; i < 400 && !svc.is_running(); ++i) {
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
    }
    ~ServiceRunner() {
        svc.stop();
        if (worker.joinable()) {
            worker.join();
        }
    }
};

std::string criterion_persistence_and_parity() {
    struct Seed {
        const char* chapter;
        const char* section;
        const char* content;
        gar::Category category;
    };
    const Seed seeds[] = {
        {"Diagnosis", "Confirmation",
         "Confirm elevated readings with ambulatory monitoring before starting drug treatment.",
         gar::Category::classification_diagnostic},
        {"Diagnosis", "Home measurement",
         "Home blood pressure monitoring protocol for newly diagnosed patients.",
         gar::Category::measurement_monitoring},
        {"Management", "Initiation", "Start a single agent at low dose in adults over eighty years.",
         gar::Category::intervention_treatment},
        {"Management", "Escalation",
         "Combine two agents when initial monotherapy fails to reach target.",
         gar::Category::intervention_treatment},
        {"Management", "Lifestyle",
         "Lifestyle advice includes sodium restriction and regular aerobic exercise.",
         gar::Category::other},
        {"Monitoring", "Laboratory",
         "Recheck electrolytes two weeks after any diuretic dose change.",
         gar::Category::measurement_monitoring},
        {"Diagnosis", "Referral", "Refer resistant cases for secondary cause evaluation.",
         gar::Category::classification_diagnostic},
        {"Monitoring", "Risk", "Annual cardiovascular risk scoring guides statin co-prescription.",
         gar::Category::measurement_monitoring},
        {"Management", "Comorbidity", "Beta blockers are preferred when coronary disease coexists.",
         gar::Category::intervention_treatment},
        {"Management", "Frailty",
         "Reduce dose gradually in frail elderly patients with postural symptoms.",
         gar::Category::intervention_treatment},
        {"Monitoring", "Follow up", "Clinic follow up interval is four weeks during titration.",
         gar::Category::measurement_monitoring},
        {"Management", "Adherence", "Document adherence counselling at every visit.",
         gar::Category::other},
    };

    gar::KnowledgeBase kb;
    for (size_t i = 0; i < 12; ++i) {
        gar::Snippet s;
        s.id = static_cast<gar::SnippetId>(i + 1);
        s.metadata = {"hypertension", "Adult Hypertension Guideline", 2023, "UNIT-CARDIO"};
        s.text = {seeds[i].chapter, seeds[i].section, seeds[i].content, gar::ContentKind::text};
        s.category = seeds[i].category;
        if (i % 3 == 0) {
            s.extras = {{"CoR", "I"}, {"LoE", "A"}};
        }
        kb.add(std::move(s));
    }
    const auto embedder = std::make_shared<gar::HashEmbedder>(256, 7);
    kb.embed_all(*embedder);

    TempDir tmp;
    const fs::path kb_dir = tmp.path / "kb";
    gar::save_kb(kb, kb_dir);
    const gar::KnowledgeBase loaded = gar::load_kb(kb_dir);

    require(loaded.size() == kb.size(), "round trip changed the snippet count");
    require(loaded.dimension() == kb.dimension(), "round trip changed the dimension");
    require(loaded.fingerprint() && kb.fingerprint() && *loaded.fingerprint() == *kb.fingerprint(),
            "round trip changed the embedder fingerprint");
    for (const auto& s : kb.snippets()) {
        const gar::Snippet* back = loaded.find(s.id);
        require(back != nullptr && *back == s,
                "snippet " + std::to_string(s.id) + " did not survive the round trip");
    }

    const std::string case_body = R"({
  "diagnosis": [{"icd": "I10", "label": "Essential hypertension"}],
  "current": {"date": "2024-03-15", "text": "home blood pressure monitoring protocol"},
  "history": [{"date": "2024-02-20", "diagnosis": "elevated clinic readings", "outpatient_notes": "lifestyle advice given", "discharge_summary": ""}]
}
)";
    const fs::path case_path = tmp.path / "case.json";
    {
        std::ofstream out(case_path, std::ios::binary);
        out << case_body;
    }

    const auto cli = run_cli("query \"" + case_path.string() + "\" --kb \"" + kb_dir.string() +
                             "\" --embedder hash:dim=256:seed=7 --k 5 --tau 0.05 --dedup 0.95 "
                             "--lambda 0.1 --current-weight 0.6 --window 2");
    require(cli.exit_code == 0, "CLI query exited with code " + std::to_string(cli.exit_code));
    require(!cli.out.empty(), "CLI query produced no output");
    const auto cli_json = nlohmann::json::parse(cli.out);
    require(!cli_json.at("recommendations").empty(), "CLI query retrieved nothing");

    gar::RetrievalConfig retrieval;
    retrieval.k = 5;
    retrieval.tau = 0.05;
    retrieval.dedup_threshold = 0.95;
    const gar::WeightingConfig weighting; // defaults match the CLI flags above

    ServiceRunner runner(loaded, embedder, retrieval, weighting);
    require(runner.port > 0 && runner.svc.is_running(), "service failed to start");
    httplib::Client client("127.0.0.1", runner.port);
    const auto res = client.Post("/v1/query", case_body, "application/json");
    require(res != nullptr, "no response from the service");
    require(res->status == 200, "service returned status " + std::to_string(res->status));
    require(res->body == cli.out, "CLI stdout and HTTP body are not byte-identical");

    return "round trip bit-exact; CLI and HTTP produced byte-identical documents (" +
           std::to_string(cli_json.at("recommendations").size()) + " recommendations)";
}

} // namespace

int main() {
    using clock = std::chrono::steady_clock;
    const auto t_start = clock::now();

    struct Criterion {
        const char* name;
        double budget_sec; // 0 = no individual budget
        std::function<std::string()> body;
    };
    const std::vector<Criterion> criteria = {
        {"ranked metrics match brute-force recomputation", 5.0, criterion_metrics_oracle},
        {"top-k retrieval matches exhaustive rescoring", 30.0, criterion_topk_oracle},
        {"closed-form weighting and similarity identities", 0.0, criterion_closed_forms},
        {"retrieved payloads are byte-identical to stored snippets", 0.0,
         criterion_verbatim_payloads},
        {"planted corpus retrieves every target at rank one", 10.0, criterion_planted_corpus},
        {"query enrichment arms order as expected on planted cases", 0.0,
         criterion_enrichment_ordering},
        {"extraction comparison rates including fine-grained coverage", 0.0,
         criterion_extraction_rates},
        {"correctness criteria agree with hand labels", 0.0, criterion_hand_labels},
        {"persistence round-trip and CLI/HTTP parity", 0.0, criterion_persistence_and_parity},
    };

    int passed = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        const auto& c = criteria[i];
        const auto t0 = clock::now();
        bool ok = false;
        std::string detail;
        try {
            detail = c.body();
            ok = true;
        } catch (const std::exception& e) {
            detail = e.what();
        }
        const double secs = std::chrono::duration<double>(clock::now() - t0).count();
        if (ok && c.budget_sec > 0.0 && secs > c.budget_sec) {
            ok = false;
            detail = "exceeded " + fmt(c.budget_sec) + "s budget (" + fmt(secs) + "s)";
        }
        std::printf("[%s] %zu. %s (%.2fs) -- %s\n", ok ? "PASS" : "FAIL", i + 1, c.name, secs,
                    detail.c_str());
        std::fflush(stdout);
        if (ok) {
            ++passed;
        }
    }

    const double total = std::chrono::duration<double>(clock::now() - t_start).count();
    const bool in_budget = total < 120.0;
    std::printf("acceptance: %d/9 criteria passed in %.2fs%s\n", passed, total,
                in_budget ? "" : " -- exceeded the 120s suite budget");
    return (passed == 9 && in_budget) ? 0 : 1;
}
