#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gar/embedding.hpp"

namespace gar {

/// Text vectorizer contract. Implementations are deterministic for a fixed
/// configuration, stateless after construction, and safe for concurrent use.
class Embedder {
public:
    virtual ~Embedder() = default;

    /// Embed one text into a unit-norm vector of `dimension()` entries.
    /// Throws EmptyInputError when the text is empty after whitespace
    /// normalization; EmbedderFailure on backend errors.
    virtual Vec embed(std::string_view text) const = 0;

    /// Batched embedding, order-preserving. Default loops over embed().
    virtual std::vector<Vec> embed_batch(std::span<const std::string> texts) const;

    virtual int dimension() const = 0;
    virtual EmbedderFingerprint fingerprint() const = 0;
};

/// Deterministic signed feature-hashing embedder over unigrams and token
/// bigrams. Buckets and signs come from a seeded 64-bit hash, so vectors are
/// reproducible across processes for a fixed (dim, seed); texts with disjoint
/// vocabularies land near-orthogonal as dim grows.
class HashEmbedder final : public Embedder {
public:
    /// dim must be >= 16.
    explicit HashEmbedder(int dim = 256, std::uint64_t seed = 0);

    Vec embed(std::string_view text) const override;
    int dimension() const override { return dim_; }
    EmbedderFingerprint fingerprint() const override;

    std::uint64_t seed() const { return seed_; }

private:
    int dim_;
    std::uint64_t seed_;
};

/// Client for a remote embedding service speaking the batch protocol
/// POST {endpoint}/embed {"texts": [...]} ->
/// {"model": str, "dimension": int, "embeddings": [[...], ...]}.
///
/// The fingerprint is pinned from the first successful response; later
/// responses reporting a different model or dimension raise
/// DimensionDriftError. Vectors are normalized on receipt.
class RemoteEmbedder final : public Embedder {
public:
    struct Options {
        int max_retries = 2;           // additional attempts after the first
        int initial_backoff_ms = 100;  // doubles per retry
        int timeout_sec = 5;
    };

    explicit RemoteEmbedder(std::string endpoint);
    RemoteEmbedder(std::string endpoint, Options options);
    ~RemoteEmbedder() override;

    Vec embed(std::string_view text) const override;
    std::vector<Vec> embed_batch(std::span<const std::string> texts) const override;

    /// Dimension as reported by the service; triggers a probe request if no
    /// response has pinned the fingerprint yet.
    int dimension() const override;
    EmbedderFingerprint fingerprint() const override;

    const std::string& endpoint() const { return endpoint_; }

private:
    struct State;
    std::vector<Vec> request(std::span<const std::string> texts) const;

    std::string endpoint_;
    Options options_;
    std::unique_ptr<State> state_;
};

/// Build an embedder from a CLI-style spec string:
///   "hash:dim=256:seed=7"  or  "remote:url=http://host:port".
/// Throws SchemaError on malformed specs.
std::unique_ptr<Embedder> make_embedder(const std::string& spec);

} // namespace gar
