#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gar/embedder.hpp"
#include "gar/errors.hpp"
#include "gar/knowledge_base.hpp"
#include "gar/query.hpp"
#include "gar/retrieval.hpp"

namespace gar {

// ---------------------------------------------------------------------------
// Text-level correctness
// ---------------------------------------------------------------------------

/// Splits on '.', '!', '?' followed by whitespace or end of text. A period
/// does not split when it ends an initial (single uppercase letter), a
/// dotted abbreviation ("e.g."), or a known unit/abbreviation token
/// ("mg", "vs", ...). Sentences come back whitespace-collapsed; empties are
/// dropped, and a trailing unterminated fragment counts as a sentence.
std::vector<std::string> sentence_split(const std::string& text);

/// True iff the two texts share at least one sentence, compared
/// case-sensitively after whitespace collapsing.
bool exact_sentence_overlap(const std::string& candidate, const std::string& reference);

/// Bag-of-tokens F1 over lowercase alphanumeric tokens (multiset
/// intersection). 0 when either side has no tokens.
double token_f1_score(const std::string& candidate, const std::string& reference);

/// Similarity oracle for the semantic criterion: maps (candidate, reference)
/// to a score, nominally in [0,1].
using Scorer = std::function<double(const std::string&, const std::string&)>;

/// True iff scorer(candidate, reference) >= theta. theta must lie in (0,1].
bool semantic_match(const std::string& candidate, const std::string& reference,
                    const Scorer& scorer, double theta);

/// Client for an external scoring service:
/// POST {endpoint}/score {"pairs": [[cand, ref], ...]} -> {"scores": [...]}.
/// Throws ScorerFailure when the service is unreachable or replies
/// malformed.
class RemoteScorer {
public:
    struct Options {
        int max_retries = 2;
        int initial_backoff_ms = 100;
        int timeout_sec = 5;
    };
    explicit RemoteScorer(std::string endpoint);
    RemoteScorer(std::string endpoint, Options options);

    double operator()(const std::string& candidate, const std::string& reference) const;
    std::vector<double> score_batch(
        const std::vector<std::pair<std::string, std::string>>& pairs) const;

private:
    std::string endpoint_;
    Options options_;
};

enum class CriterionMode {
    exact_sentence_overlap,
    semantic_threshold,
};

/// Decides whether a retrieved text counts as correct against a reference.
struct CorrectnessCriterion {
    CriterionMode mode = CriterionMode::semantic_threshold;
    double theta = 0.72;
    /// Scorer used in semantic mode; token_f1_score when unset.
    Scorer scorer;

    bool matches(const std::string& candidate, const std::string& reference) const;
};

/// Parses "exact", "semantic", or "semantic:theta=0.5". Throws SchemaError.
CorrectnessCriterion parse_criterion_spec(const std::string& spec);

// ---------------------------------------------------------------------------
// Ranked-retrieval metrics
// ---------------------------------------------------------------------------

/// Correct-in-top-K share. Flag lists shorter than K count the missing
/// positions as incorrect. K must be >= 1.
double precision_at_k(const std::vector<bool>& flags, size_t K);

/// Share of queries with at least one correct result in their top K.
/// Requires at least one query.
double hits_at_k(const std::vector<std::vector<bool>>& per_query_flags, size_t K);

/// Mean reciprocal rank of the first relevant result; queries that never
/// retrieved a relevant result contribute 0. Requires at least one query.
double mrr(const std::vector<std::optional<int>>& first_relevant_ranks);

// ---------------------------------------------------------------------------
// Corpus evaluation
// ---------------------------------------------------------------------------

/// One labeled evaluation case: the query inputs plus what counts as
/// relevant, by snippet id and/or by reference text.
struct GroundTruthCase {
    std::string case_id;
    CaseInput query;
    std::vector<SnippetId> relevant_ids;
    std::vector<std::string> relevant_texts;
};

/// Parses one JSON Lines record:
/// {"case_id": str, "query": {...}, "relevant_ids": [...], "relevant_texts": [...]}.
GroundTruthCase ground_truth_from_jsonl(const std::string& line);

/// Loads a JSONL case file; blank lines skipped. Throws ParseError with the
/// offending line number.
std::vector<GroundTruthCase> load_ground_truth(const std::string& path);

inline const std::vector<size_t>& metric_k_grid() {
    static const std::vector<size_t> grid = {1, 3, 5, 10};
    return grid;
}

struct MetricsReport {
    size_t n = 0; ///< Cases evaluated (errored cases excluded).
    std::map<size_t, double> precision_at;
    std::map<size_t, double> hits_at;
    double mrr = 0.0;
    /// Rank of the first relevant recommendation in the K=10 run, per case;
    /// nullopt when nothing relevant was retrieved.
    std::map<std::string, std::optional<int>> per_case_ranks;
    std::vector<std::pair<std::string, std::string>> errors; ///< (case_id, message)
};

/// Runs compose -> embed -> match -> fuse per case, labels each
/// recommendation with the criterion (id match or text match against any
/// reference), and aggregates Precision@K / Hits@K over K in {1,3,5,10} plus
/// MRR from the K=10 run. Cases that raise are recorded in `errors` and
/// skipped.
MetricsReport evaluate_corpus(const std::vector<GroundTruthCase>& cases, const KnowledgeBase& kb,
                              const Embedder& embedder, const RetrievalConfig& retrieval_cfg,
                              const WeightingConfig& weighting_cfg,
                              const CorrectnessCriterion& criterion);

struct AblationArm {
    std::string name;
    MetricsReport report;
};

/// Three-arm comparison on the same cases: diagnosis only, diagnosis +
/// current record, and the full query with history. The first two arms run
/// single-part queries (weight 1.0).
std::vector<AblationArm> run_ablation(const std::vector<GroundTruthCase>& cases,
                                      const KnowledgeBase& kb, const Embedder& embedder,
                                      const RetrievalConfig& retrieval_cfg,
                                      const WeightingConfig& weighting_cfg,
                                      const CorrectnessCriterion& criterion);

std::string render_metrics_json(const MetricsReport& report);
std::string render_metrics_table(const MetricsReport& report);
std::string render_ablation_json(const std::vector<AblationArm>& arms);
std::string render_ablation_table(const std::vector<AblationArm>& arms);

} // namespace gar
