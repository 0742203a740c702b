#include "gar/snippet.hpp"

#include <cmath>

#include "gar/errors.hpp"

namespace gar {

std::string metadata_canonical_string(const SnippetMetadata& m) {
    return m.disease_domain + ": " + m.title + ":" + std::to_string(m.year) + ":" +
           m.organization;
}

SnippetMetadata metadata_from_canonical_string(const std::string& line) {
    const auto last = line.rfind(':');
    if (last == std::string::npos || last == 0) {
        throw SchemaError("metadata line has no organization field: " + line);
    }
    const auto second_last = line.rfind(':', last - 1);
    if (second_last == std::string::npos) {
        throw SchemaError("metadata line has no year field: " + line);
    }
    SnippetMetadata m;
    m.organization = line.substr(last + 1);
    const std::string year_text = line.substr(second_last + 1, last - second_last - 1);
    try {
        size_t consumed = 0;
        m.year = std::stoi(year_text, &consumed);
        if (consumed != year_text.size()) {
            throw SchemaError("non-numeric year '" + year_text + "'");
        }
    } catch (const std::logic_error&) {
        throw SchemaError("non-numeric year '" + year_text + "'");
    }
    const std::string head = line.substr(0, second_last);
    const auto sep = head.find(": ");
    if (sep == std::string::npos) {
        throw SchemaError("metadata line has no 'domain: title' separator: " + line);
    }
    m.disease_domain = head.substr(0, sep);
    m.title = head.substr(sep + 2);
    if (m.disease_domain.empty() || m.title.empty() || m.organization.empty()) {
        throw SchemaError("metadata fields must be non-empty: " + line);
    }
    return m;
}

std::string to_string(ContentKind kind) {
    switch (kind) {
    case ContentKind::text: return "text";
    case ContentKind::table: return "table";
    case ContentKind::figure: return "figure";
    }
    return "text";
}

ContentKind content_kind_from_string(const std::string& name) {
    if (name == "text") return ContentKind::text;
    if (name == "table") return ContentKind::table;
    if (name == "figure") return ContentKind::figure;
    throw SchemaError("unknown content kind '" + name + "'");
}

std::string to_string(Category category) {
    switch (category) {
    case Category::classification_diagnostic: return "classification_diagnostic";
    case Category::measurement_monitoring: return "measurement_monitoring";
    case Category::intervention_treatment: return "intervention_treatment";
    case Category::other: return "other";
    }
    return "other";
}

Category category_from_string(const std::string& name) {
    if (name == "classification_diagnostic") return Category::classification_diagnostic;
    if (name == "measurement_monitoring") return Category::measurement_monitoring;
    if (name == "intervention_treatment") return Category::intervention_treatment;
    if (name == "other") return Category::other;
    throw SchemaError("unknown category '" + name + "'");
}

std::optional<std::string> Snippet::extra(const std::string& key) const {
    for (const auto& [k, v] : extras) {
        if (k == key) {
            return v;
        }
    }
    return std::nullopt;
}

bool Snippet::operator==(const Snippet& other) const {
    const bool embedding_equal =
        embedding.has_value() == other.embedding.has_value() &&
        (!embedding || (embedding->size() == other.embedding->size() &&
                        *embedding == *other.embedding));
    return embedding_equal && id == other.id && metadata == other.metadata &&
           text == other.text && extras == other.extras && category == other.category;
}

std::string flatten_for_embedding(const StructuredText& text) {
    std::string out;
    for (const std::string* part : {&text.chapter, &text.section, &text.content}) {
        if (part->empty()) {
            continue;
        }
        if (!out.empty()) {
            out += ": ";
        }
        out += *part;
    }
    return out;
}

void validate_snippet(const Snippet& s) {
    const auto& m = s.metadata;
    if (m.disease_domain.empty() || m.title.empty() || m.organization.empty()) {
        throw SchemaError("snippet " + std::to_string(s.id) + ": metadata fields must be non-empty");
    }
    if (m.year < 1900 || m.year > 2100) {
        throw SchemaError("snippet " + std::to_string(s.id) + ": year " + std::to_string(m.year) +
                          " outside [1900, 2100]");
    }
    if (s.text.content.empty()) {
        throw SchemaError("snippet " + std::to_string(s.id) + ": empty content");
    }
    if (s.text.content_kind != ContentKind::text && !s.extra("url") && !s.extra("caption") &&
        !s.extra("locator")) {
        throw SchemaError("snippet " + std::to_string(s.id) +
                          ": table/figure content requires a locator entry in extras");
    }
    if (const auto tagged = s.extra("category"); tagged && *tagged != to_string(s.category)) {
        throw SchemaError("snippet " + std::to_string(s.id) + ": category field '" +
                          to_string(s.category) + "' disagrees with extras category '" + *tagged +
                          "'");
    }
    if (s.embedding) {
        const double norm = s.embedding->norm();
        if (std::abs(norm - 1.0) > 1e-6) {
            throw SchemaError("snippet " + std::to_string(s.id) + ": embedding norm " +
                              std::to_string(norm) + " is not unit");
        }
    }
}

} // namespace gar
