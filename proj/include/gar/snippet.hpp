#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gar/embedding.hpp"

namespace gar {

using SnippetId = std::uint64_t;

/// Provenance of a snippet: which guideline it came from.
struct SnippetMetadata {
    std::string disease_domain;
    std::string title; // may contain colons
    int year = 0;      // calendar year, [1900, 2100]
    std::string organization;

    bool operator==(const SnippetMetadata&) const = default;
};

/// Canonical one-line rendering: "domain: title:year:organization"
/// (single space after the first colon only).
std::string metadata_canonical_string(const SnippetMetadata& m);

/// Inverse of metadata_canonical_string. Splits at the rightmost two colons
/// (year, organization) so titles containing colons survive the round trip.
/// Throws SchemaError on malformed input.
SnippetMetadata metadata_from_canonical_string(const std::string& line);

enum class ContentKind { text, table, figure };

std::string to_string(ContentKind kind);
ContentKind content_kind_from_string(const std::string& name); // throws SchemaError

/// The text payload of a snippet plus its position in the source document's
/// heading hierarchy.
struct StructuredText {
    std::string chapter; // empty only when the source has no heading hierarchy
    std::string section;
    std::string content; // verbatim guideline text, never rewritten
    ContentKind content_kind = ContentKind::text;

    bool operator==(const StructuredText&) const = default;
};

/// The three knowledge categories plus a catch-all.
enum class Category {
    classification_diagnostic,
    measurement_monitoring,
    intervention_treatment,
    other,
};

std::string to_string(Category category);
Category category_from_string(const std::string& name); // throws SchemaError

/// The retrievable unit: id, optional embedding, provenance metadata,
/// structured text, and ordered extras (url, CoR, LoE, category, ...).
struct Snippet {
    SnippetId id = 0;
    std::optional<Vec> embedding;
    SnippetMetadata metadata;
    StructuredText text;
    std::vector<std::pair<std::string, std::string>> extras;
    Category category = Category::other;

    /// First extras value stored under `key`, if any.
    std::optional<std::string> extra(const std::string& key) const;

    bool operator==(const Snippet& other) const;
};

/// Text that gets vectorized for a snippet: non-empty chapter/section/content
/// joined with ": ".
std::string flatten_for_embedding(const StructuredText& text);

/// Structural validation of one snippet (field invariants, category/extras
/// agreement, table/figure locator presence). Throws SchemaError.
void validate_snippet(const Snippet& s);

} // namespace gar
