#include "gar/embedding.hpp"

#include <cmath>

namespace gar {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    // Seed folded into the offset basis so distinct seeds generate
    // unrelated hash families.
    std::uint64_t h = 14695981039346656037ull ^ (seed * 0x9e3779b97f4a7c15ull);
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string to_hex(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

Vec l2_normalize(const Vec& v, double min_norm) {
    const double n = v.norm();
    if (!(n >= min_norm)) {
        throw ZeroVectorError("cannot normalize vector with norm " + std::to_string(n));
    }
    return v / n;
}

double cosine_similarity(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) {
        throw DimensionMismatchError("cosine: dimension " + std::to_string(a.size()) +
                                     " vs " + std::to_string(b.size()));
    }
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) {
        throw ZeroVectorError("cosine undefined for the zero vector");
    }
    return a.dot(b) / (na * nb);
}

Vec weighted_combine(std::span<const double> weights, std::span<const Vec> vectors) {
    if (weights.size() != vectors.size()) {
        throw LengthMismatchError("weighted_combine: " + std::to_string(weights.size()) +
                                  " weights for " + std::to_string(vectors.size()) + " vectors");
    }
    if (weights.empty()) {
        throw LengthMismatchError("weighted_combine: empty input");
    }
    double weight_sum = 0.0;
    for (double w : weights) {
        weight_sum += w;
    }
    if (!(weight_sum > 0.0)) {
        throw DegenerateCombinationError("weighted_combine: weights sum to zero");
    }
    const Eigen::Index dim = vectors[0].size();
    Vec sum = Vec::Zero(dim);
    for (size_t i = 0; i < vectors.size(); ++i) {
        if (vectors[i].size() != dim) {
            throw LengthMismatchError("weighted_combine: mixed dimensions");
        }
        sum += weights[i] * vectors[i];
    }
    if (sum.norm() < 1e-9) {
        throw DegenerateCombinationError("weighted_combine: exact cancellation");
    }
    return l2_normalize(sum);
}

} // namespace gar
