#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gar/errors.hpp"

namespace gar {

/// Dense embedding vector. Embedders produce unit-norm vectors
/// (|norm - 1| <= 1e-6); the zero vector is never a valid embedding.
using Vec = Eigen::VectorXd;

/// Binds stored vectors to the exact embedder configuration that produced
/// them, so queries and knowledge bases provably share a semantic space.
struct EmbedderFingerprint {
    std::string name;
    int dimension = 0;
    std::string params_digest; // hex digest of the configuration

    bool operator==(const EmbedderFingerprint&) const = default;
};

/// Stable 64-bit FNV-1a over bytes; used for fingerprint digests and as the
/// base of the seeded feature hash. Deterministic across runs and platforms.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0);

/// Lowercase hex rendering of a 64-bit value (16 chars).
std::string to_hex(std::uint64_t value);

/// Scale `v` to unit L2 norm. Throws ZeroVectorError if the norm is below
/// `min_norm`.
Vec l2_normalize(const Vec& v, double min_norm = 1e-12);

/// Cosine similarity (a.b)/(|a||b|), in [-1, 1].
/// Throws DimensionMismatchError / ZeroVectorError.
double cosine_similarity(const Vec& a, const Vec& b);

/// Unit-normalized weighted sum of unit-norm vectors.
/// Throws LengthMismatchError on size disagreement and
/// DegenerateCombinationError when the sum cancels to norm < 1e-9.
Vec weighted_combine(std::span<const double> weights, std::span<const Vec> vectors);

} // namespace gar
