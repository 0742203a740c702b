#include "gar/ingest.hpp"

#include <algorithm>
#include <sstream>

#include "gar/errors.hpp"
#include "gar/text.hpp"

namespace gar {

namespace {

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string line;
    std::istringstream in(text);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        lines.push_back(line);
    }
    return lines;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) {
        return "";
    }
    const auto end = s.find_last_not_of(" \t");
    return s.substr(begin, end - begin + 1);
}

bool is_structural(const std::string& line) {
    const std::string t = trim(line);
    return t.rfind('#', 0) == 0 || t.rfind("[[", 0) == 0;
}

// Parses the attribute list of an open tag: `key=value` items separated by
// whitespace, values optionally double-quoted.
std::vector<std::pair<std::string, std::string>> parse_attributes(const std::string& attrs,
                                                                  int line_no) {
    std::vector<std::pair<std::string, std::string>> out;
    size_t pos = 0;
    while (pos < attrs.size()) {
        while (pos < attrs.size() && (attrs[pos] == ' ' || attrs[pos] == '\t')) {
            ++pos;
        }
        if (pos >= attrs.size()) {
            break;
        }
        const auto eq = attrs.find('=', pos);
        if (eq == std::string::npos) {
            throw ParseError("malformed attribute near '" + attrs.substr(pos) + "'", line_no);
        }
        const std::string key = trim(attrs.substr(pos, eq - pos));
        if (key.empty() || key.find(' ') != std::string::npos) {
            throw ParseError("malformed attribute key near '" + attrs.substr(pos) + "'", line_no);
        }
        pos = eq + 1;
        std::string value;
        if (pos < attrs.size() && attrs[pos] == '"') {
            const auto close = attrs.find('"', pos + 1);
            if (close == std::string::npos) {
                throw ParseError("unterminated quoted attribute value", line_no);
            }
            value = attrs.substr(pos + 1, close - pos - 1);
            pos = close + 1;
        } else {
            const auto end = attrs.find_first_of(" \t", pos);
            value = attrs.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
            pos = end == std::string::npos ? attrs.size() : end;
        }
        out.emplace_back(key, value);
    }
    return out;
}

GuidelineDocument parse_front_matter(const std::string& source_id,
                                     const std::vector<std::string>& lines) {
    GuidelineDocument doc;
    doc.source_id = source_id;

    bool have_domain = false, have_title = false, have_year = false, have_org = false;
    size_t i = 0;
    for (; i < lines.size(); ++i) {
        const std::string line = trim(lines[i]);
        const int line_no = static_cast<int>(i) + 1;
        if (is_structural(lines[i])) {
            break;
        }
        if (line.empty()) {
            continue;
        }
        const auto sep = line.find(':');
        if (sep == std::string::npos) {
            throw ParseError("expected 'key: value' front-matter line, got '" + line + "'",
                             line_no);
        }
        const std::string key = trim(line.substr(0, sep));
        const std::string value = trim(line.substr(sep + 1));
        if (key == "disease_domain") {
            doc.metadata.disease_domain = value;
            have_domain = true;
        } else if (key == "title") {
            doc.metadata.title = value;
            have_title = true;
        } else if (key == "year") {
            try {
                doc.metadata.year = std::stoi(value);
            } catch (const std::logic_error&) {
                throw ParseError("year is not an integer: '" + value + "'", line_no);
            }
        } else if (key == "organization") {
            doc.metadata.organization = value;
            have_org = true;
        } else {
            throw ParseError("unknown front-matter key '" + key + "'", line_no);
        }
        if (key == "year") {
            have_year = true;
        }
    }
    if (!have_domain || !have_title || !have_year || !have_org) {
        throw ParseError("front matter must define disease_domain, title, year, organization",
                         static_cast<int>(i));
    }
    if (doc.metadata.disease_domain.empty() || doc.metadata.title.empty() ||
        doc.metadata.organization.empty()) {
        throw ParseError("front-matter fields must be non-empty", static_cast<int>(i));
    }
    if (doc.metadata.year < 1900 || doc.metadata.year > 2100) {
        throw ParseError("year " + std::to_string(doc.metadata.year) + " outside [1900, 2100]",
                         static_cast<int>(i));
    }

    doc.body_first_line = static_cast<int>(i) + 1;
    std::string body;
    for (size_t k = i; k < lines.size(); ++k) {
        body += lines[k];
        body += '\n';
    }
    doc.body = body;
    return doc;
}

} // namespace

GuidelineDocument parse_guideline_document(const std::string& source_id,
                                           const std::string& full_text) {
    return parse_front_matter(source_id, split_lines(full_text));
}

std::vector<Snippet> parse_annotated_document(const GuidelineDocument& doc, SnippetId base_id) {
    const std::vector<std::string> lines = split_lines(doc.body);
    std::vector<Snippet> snippets;

    std::string chapter;
    std::string section;
    bool seen_chapter = false;

    bool in_block = false;
    int block_open_line = 0;
    Snippet pending;
    std::vector<std::string> content_lines;

    SnippetId next_id = base_id;

    for (size_t i = 0; i < lines.size(); ++i) {
        const std::string& raw = lines[i];
        const std::string line = trim(raw);
        const int line_no = doc.body_first_line + static_cast<int>(i);

        if (in_block) {
            if (line.rfind("[[/snippet]]", 0) == 0) {
                // Strip the leading/trailing blank lines; inner blanks stay.
                size_t first = 0, last = content_lines.size();
                while (first < last && is_blank(content_lines[first])) {
                    ++first;
                }
                while (last > first && is_blank(content_lines[last - 1])) {
                    --last;
                }
                std::string content;
                for (size_t k = first; k < last; ++k) {
                    if (k > first) {
                        content += '\n';
                    }
                    content += content_lines[k];
                }
                if (content.empty()) {
                    throw ParseError("snippet block has no content", block_open_line);
                }
                pending.text.content = content;
                pending.text.chapter = chapter;
                pending.text.section = section;
                pending.metadata = doc.metadata;
                pending.id = next_id++;
                snippets.push_back(std::move(pending));
                pending = Snippet{};
                content_lines.clear();
                in_block = false;
                continue;
            }
            if (line.rfind("[[snippet", 0) == 0) {
                throw ParseError("snippet blocks cannot nest", line_no);
            }
            content_lines.push_back(raw);
            continue;
        }

        if (line.rfind("[[/snippet]]", 0) == 0) {
            throw ParseError("[[/snippet]] without an open block", line_no);
        }
        if (line.rfind("[[snippet", 0) == 0) {
            const auto close = line.find("]]");
            if (close == std::string::npos) {
                throw ParseError("snippet open tag is missing ']]'", line_no);
            }
            if (!trim(line.substr(close + 2)).empty()) {
                throw ParseError("content after ']]' on the open-tag line", line_no);
            }
            const std::string attr_text = line.substr(9, close - 9);
            pending = Snippet{};
            for (const auto& [key, value] : parse_attributes(attr_text, line_no)) {
                if (key == "category") {
                    try {
                        pending.category = category_from_string(value);
                    } catch (const SchemaError& e) {
                        throw ParseError(e.what(), line_no);
                    }
                    pending.extras.emplace_back("category", value);
                } else if (key == "kind") {
                    try {
                        pending.text.content_kind = content_kind_from_string(value);
                    } catch (const SchemaError& e) {
                        throw ParseError(e.what(), line_no);
                    }
                } else if (key == "url" || key == "CoR" || key == "LoE") {
                    pending.extras.emplace_back(key, value);
                } else {
                    throw ParseError("unknown snippet attribute '" + key + "'", line_no);
                }
            }
            if (pending.text.content_kind != ContentKind::text && !pending.extra("url")) {
                throw ParseError("table/figure snippets require a url locator", line_no);
            }
            in_block = true;
            block_open_line = line_no;
            continue;
        }
        if (line.rfind("##", 0) == 0) {
            if (line.rfind("###", 0) == 0) {
                throw ParseError("only '#' and '##' headings are supported", line_no);
            }
            if (!seen_chapter) {
                throw ParseError("'##' section before any '#' chapter", line_no);
            }
            section = trim(line.substr(2));
            continue;
        }
        if (line.rfind('#', 0) == 0) {
            chapter = trim(line.substr(1));
            section.clear();
            seen_chapter = true;
            continue;
        }
        // Prose outside snippet blocks is not extracted.
    }

    if (in_block) {
        throw ParseError("snippet block never closed", block_open_line);
    }
    return snippets;
}

// ---------------------------------------------------------------------------
// Relevance
// ---------------------------------------------------------------------------

ExtractionConfig ExtractionConfig::defaults() {
    ExtractionConfig cfg;
    cfg.relevance_threshold = 0.5;
    cfg.category_keywords = {
        {Category::classification_diagnostic,
         {"classification", "diagnosis", "diagnostic", "definition", "criteria", "grade",
          "stage"}},
        {Category::measurement_monitoring,
         {"measurement", "monitoring", "bp", "blood", "pressure", "follow-up", "assessment"}},
        {Category::intervention_treatment,
         {"treatment", "therapy", "intervention", "drug", "medication", "dose", "target"}},
    };
    return cfg;
}

namespace {

// Whole-token, case-insensitive presence of `keyword` (itself possibly
// multi-token) in the token stream.
bool keyword_present(const std::vector<std::string>& tokens, const std::string& keyword) {
    const std::vector<std::string> needle = tokenize(keyword);
    if (needle.empty() || needle.size() > tokens.size()) {
        return false;
    }
    for (size_t i = 0; i + needle.size() <= tokens.size(); ++i) {
        bool all = true;
        for (size_t k = 0; k < needle.size(); ++k) {
            if (tokens[i + k] != needle[k]) {
                all = false;
                break;
            }
        }
        if (all) {
            return true;
        }
    }
    return false;
}

} // namespace

double relevance_score(const Snippet& snippet, const ExtractionConfig& cfg) {
    if (snippet.category != Category::other) {
        return 1.0; // expert annotation dominates
    }
    const std::vector<std::string> tokens = tokenize(
        snippet.text.chapter + " " + snippet.text.section + " " + snippet.text.content);
    double best = 0.0;
    for (const auto& [category, keywords] : cfg.category_keywords) {
        if (category == Category::other || keywords.empty()) {
            continue;
        }
        size_t hits = 0;
        for (const auto& kw : keywords) {
            if (keyword_present(tokens, kw)) {
                ++hits;
            }
        }
        best = std::max(best, static_cast<double>(hits) / static_cast<double>(keywords.size()));
    }
    return std::min(best, 1.0);
}

std::vector<Snippet> filter_relevant(const std::vector<Snippet>& snippets,
                                     const ExtractionConfig& cfg) {
    std::vector<Snippet> kept;
    for (const auto& s : snippets) {
        if (relevance_score(s, cfg) >= cfg.relevance_threshold) {
            kept.push_back(s);
        }
    }
    return kept;
}

// ---------------------------------------------------------------------------
// Extraction metrics
// ---------------------------------------------------------------------------

ExtractionReport extraction_metrics(const std::vector<Snippet>& candidate,
                                    const std::vector<Snippet>& reference) {
    if (reference.empty()) {
        throw EmptyReferenceError("extraction_metrics: empty reference set");
    }

    std::vector<std::string> ref_norm;
    ref_norm.reserve(reference.size());
    for (const auto& r : reference) {
        ref_norm.push_back(collapse_whitespace(r.text.content));
    }

    ExtractionReport report;
    report.candidate_total = candidate.size();
    report.reference_total = reference.size();

    std::vector<bool> ref_hit(reference.size(), false);
    for (const auto& c : candidate) {
        const std::string c_norm = collapse_whitespace(c.text.content);
        if (c_norm.empty()) {
            continue;
        }
        bool matched = false;
        for (size_t r = 0; r < ref_norm.size(); ++r) {
            if (ref_norm[r].find(c_norm) != std::string::npos) {
                matched = true;
                ref_hit[r] = true;
            }
        }
        if (matched) {
            ++report.matched_candidates;
        }
    }
    report.matched_references =
        static_cast<size_t>(std::count(ref_hit.begin(), ref_hit.end(), true));

    const auto pct = [](size_t num, size_t den) {
        return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
    };
    report.precision_pct = pct(report.matched_candidates, report.candidate_total);
    report.hit_rate_pct = pct(report.matched_references, report.reference_total);
    report.coverage_pct = pct(report.candidate_total, report.reference_total);
    return report;
}

} // namespace gar
