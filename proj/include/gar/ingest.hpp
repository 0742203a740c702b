#pragma once

#include <map>
#include <string>
#include <vector>

#include "gar/snippet.hpp"

namespace gar {

/// An annotated guideline document: front-matter metadata plus markup body.
///
/// Document format (UTF-8 text):
///   - front matter before the first heading: `disease_domain:`, `title:`,
///     `year:`, `organization:` lines (all four required);
///   - `# TITLE` opens a chapter, `## TITLE` a section within it;
///   - `[[snippet category=... kind=... url=... CoR=... LoE=...]]` ...
///     `[[/snippet]]` delimits one snippet; everything between is its verbatim
///     content. All attributes are optional except that kind=table/figure
///     requires url. Values may be double-quoted. Prose outside snippet
///     blocks is ignored.
struct GuidelineDocument {
    std::string source_id;
    SnippetMetadata metadata;
    std::string body;        // markup after the front matter
    int body_first_line = 1; // 1-based line of `body` within the source file
};

/// Split front matter from body and validate the metadata block.
/// Throws ParseError (line numbers refer to the source file).
GuidelineDocument parse_guideline_document(const std::string& source_id,
                                           const std::string& full_text);

/// Extract one snippet per block, in document order, ids assigned
/// sequentially from `base_id`. Chapter/section come from the enclosing
/// headings; document metadata is copied onto every snippet.
/// Throws ParseError (unclosed block at its opening line, unknown attribute,
/// heading-nesting violation).
std::vector<Snippet> parse_annotated_document(const GuidelineDocument& doc,
                                              SnippetId base_id = 0);

/// Relevance-filter configuration: the acceptance threshold plus per-category
/// keyword lists for unannotated content.
struct ExtractionConfig {
    double relevance_threshold = 0.5;
    std::map<Category, std::vector<std::string>> category_keywords;

    /// Threshold 0.5 with built-in keyword lists for the three knowledge
    /// categories.
    static ExtractionConfig defaults();
};

/// Clinical-usefulness score in [0, 1]. A snippet annotated with one of the
/// three knowledge categories scores 1.0 outright; otherwise the best
/// category's keyword-hit fraction (case-insensitive whole-token matching
/// over chapter + section + content).
double relevance_score(const Snippet& snippet, const ExtractionConfig& cfg);

/// Order-preserving subset with relevance_score >= cfg.relevance_threshold.
std::vector<Snippet> filter_relevant(const std::vector<Snippet>& snippets,
                                     const ExtractionConfig& cfg);

/// Extraction comparison counters and rates. Coverage is unbounded above:
/// finer-grained candidate sets can exceed 100%.
struct ExtractionReport {
    double precision_pct = 0.0;
    double hit_rate_pct = 0.0;
    double coverage_pct = 0.0;
    size_t matched_candidates = 0;
    size_t matched_references = 0;
    size_t candidate_total = 0;
    size_t reference_total = 0;
};

/// Score a candidate extraction against reference snippets. A candidate
/// matches a reference when its whitespace-collapsed content equals or is a
/// contiguous substring of the reference's (case preserved).
///   precision = matched candidates / candidates x 100
///   hit rate  = matched references / references x 100
///   coverage  = candidates / references x 100
/// Throws EmptyReferenceError when `reference` is empty.
ExtractionReport extraction_metrics(const std::vector<Snippet>& candidate,
                                    const std::vector<Snippet>& reference);

} // namespace gar
