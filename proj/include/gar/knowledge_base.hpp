#pragma once

#include <filesystem>
#include <optional>
#include <unordered_map>
#include <vector>

#include "gar/embedder.hpp"
#include "gar/snippet.hpp"

namespace gar {

/// Persisted collection of snippets sharing one embedding space.
///
/// A loaded knowledge base is an immutable snapshot: any number of threads
/// may read it concurrently. Mutation (add, embed_all) requires exclusive
/// ownership and is meant for the offline build path.
class KnowledgeBase {
public:
    KnowledgeBase() = default;

    /// Add a snippet. Throws DuplicateIdError when the id is already present
    /// and DimensionMismatchError when an embedded snippet disagrees with the
    /// established dimension (the first embedded snippet pins it).
    void add(Snippet snippet);

    /// Embed every snippet with `e` (over flatten_for_embedding of its text)
    /// and record the embedder fingerprint.
    /// Throws EmptyKnowledgeBaseError when empty; embedder errors propagate.
    void embed_all(const Embedder& e);

    const std::vector<Snippet>& snippets() const { return snippets_; }
    size_t size() const { return snippets_.size(); }
    bool empty() const { return snippets_.empty(); }

    /// Snippet lookup by id; nullptr when absent.
    const Snippet* find(SnippetId id) const;

    /// Embedding dimension; 0 until any vector or manifest establishes it.
    int dimension() const { return dimension_; }
    const std::optional<EmbedderFingerprint>& fingerprint() const { return fingerprint_; }

    bool fully_embedded() const;

    void set_fingerprint(EmbedderFingerprint fp);
    void set_dimension(int dim);

private:
    std::vector<Snippet> snippets_;
    std::unordered_map<SnippetId, size_t> by_id_;
    int dimension_ = 0;
    std::optional<EmbedderFingerprint> fingerprint_;
};

/// Full-collection validation: per-snippet invariants, id uniqueness,
/// dimension and fingerprint consistency. Throws SchemaError /
/// FingerprintMismatchError. Runs automatically on load.
void validate_kb(const KnowledgeBase& kb);

/// Write `dir/corpus.jsonl` (one snippet per line, canonical field order and
/// full-precision vectors) plus `dir/manifest.json`. Throws IoError.
void save_kb(const KnowledgeBase& kb, const std::filesystem::path& dir);

/// Load and validate a knowledge base saved by save_kb.
/// Throws IoError / SchemaError / FingerprintMismatchError.
KnowledgeBase load_kb(const std::filesystem::path& dir);

/// One snippet as a canonical JSONL line (no trailing newline).
std::string snippet_to_jsonl(const Snippet& s);

/// Parse one corpus line. Unknown or missing required fields throw
/// SchemaError.
Snippet snippet_from_jsonl(const std::string& line);

} // namespace gar
