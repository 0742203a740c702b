#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gar/embedding.hpp"
#include "gar/errors.hpp"
#include "gar/knowledge_base.hpp"
#include "gar/query.hpp"
#include "gar/snippet.hpp"

namespace gar {

/// Knobs for the similarity search and the fusion step that follows it.
struct RetrievalConfig {
    /// How many snippets to return from the similarity search.
    size_t k = 5;
    /// Minimum cosine similarity a snippet must reach to be considered.
    double tau = 0.30;
    /// Candidates whose cosine to an already-kept snippet reaches this value
    /// are dropped as redundant.
    double dedup_threshold = 0.95;
    /// When set, snippets of this category get their score multiplied by
    /// context_boost before the final ordering.
    std::optional<Category> context;
    double context_boost = 1.1;

    /// Throws SchemaError when a field is out of range.
    void validate() const;
};

struct ScoredSnippet {
    SnippetId snippet_id = 0;
    double score = 0.0; ///< Raw cosine similarity; never altered by re-ranking.
    int rank = 0;       ///< 1-based position after the final ordering.
};

/// Final answer for one query: the diagnosis it was grounded on plus the
/// retrieved snippets, verbatim, with provenance.
struct SystemOutput {
    DiagnosticOutput diagnosis;
    struct Recommendation {
        ScoredSnippet scored;
        Snippet snippet;    ///< Full stored payload, byte-identical to the KB.
        std::string provenance; ///< Canonical metadata string of the source.
    };
    std::vector<Recommendation> recommendations;
    RetrievalConfig config;
};

/// Exact cosine search: every snippet with similarity >= tau, sorted by score
/// descending (ties: ascending id), truncated to k. Throws
/// EmptyKnowledgeBaseError, NotEmbeddedError, DimensionMismatchError, or
/// FingerprintMismatchError when `fingerprint` is given and disagrees with
/// the knowledge base.
std::vector<ScoredSnippet> match_topk(
    const Vec& q, const KnowledgeBase& kb, const RetrievalConfig& cfg,
    const std::optional<EmbedderFingerprint>& fingerprint = std::nullopt);

/// Greedy scan from the top: a candidate survives only if its cosine to every
/// already-kept snippet is < theta_dup. Order preserved, ranks reassigned.
std::vector<ScoredSnippet> deduplicate(const std::vector<ScoredSnippet>& candidates,
                                       const KnowledgeBase& kb, double theta_dup);

/// Multiplies the score of on-context snippets by `boost` for ordering
/// purposes only, then resorts (ties: ascending id). Stored scores stay raw.
std::vector<ScoredSnippet> context_rerank(const std::vector<ScoredSnippet>& candidates,
                                          const KnowledgeBase& kb,
                                          const std::optional<Category>& context, double boost);

/// Fusion: deduplicate, re-rank by context, attach full snippet payloads and
/// provenance. Empty candidates yield a diagnosis-only output.
SystemOutput fuse(const DiagnosticOutput& diagnosis, const std::vector<ScoredSnippet>& candidates,
                  const KnowledgeBase& kb, const RetrievalConfig& cfg);

/// JSON rendering shared by the CLI and the HTTP service so both emit
/// byte-identical documents.
std::string render_system_output(const SystemOutput& out);

} // namespace gar
