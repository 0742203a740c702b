#include "gar/embedder.hpp"

#include <chrono>
#include <mutex>
#include <optional>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "gar/text.hpp"
#include "http_util.hpp"

namespace gar {

using nlohmann::json;

std::vector<Vec> Embedder::embed_batch(std::span<const std::string> texts) const {
    std::vector<Vec> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        out.push_back(embed(t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// HashEmbedder
// ---------------------------------------------------------------------------

HashEmbedder::HashEmbedder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim < 16) {
        throw SchemaError("hash embedder dimension must be >= 16, got " + std::to_string(dim));
    }
}

Vec HashEmbedder::embed(std::string_view text) const {
    if (is_blank(text)) {
        throw EmptyInputError("embed: empty input text");
    }
    const std::vector<std::string> tokens = tokenize(text);
    if (tokens.empty()) {
        throw EmptyInputError("embed: no tokens survive normalization");
    }

    Vec acc = Vec::Zero(dim_);
    auto add_feature = [&](std::string_view feature) {
        const std::uint64_t h = fnv1a64(feature, seed_);
        const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim_));
        const double sign = (h >> 63) ? 1.0 : -1.0;
        acc[bucket] += sign;
    };

    for (const auto& tok : tokens) {
        add_feature(tok);
    }
    for (size_t i = 0; i + 1 < tokens.size(); ++i) {
        add_feature(tokens[i] + " " + tokens[i + 1]);
    }
    return l2_normalize(acc);
}

EmbedderFingerprint HashEmbedder::fingerprint() const {
    const std::string params = "dim=" + std::to_string(dim_) + ";seed=" + std::to_string(seed_);
    return {"hash", dim_, to_hex(fnv1a64(params))};
}

// ---------------------------------------------------------------------------
// RemoteEmbedder
// ---------------------------------------------------------------------------

struct RemoteEmbedder::State {
    mutable std::mutex mutex;
    mutable std::optional<EmbedderFingerprint> pinned;
};

RemoteEmbedder::RemoteEmbedder(std::string endpoint) : RemoteEmbedder(std::move(endpoint), Options()) {}

RemoteEmbedder::RemoteEmbedder(std::string endpoint, Options options)
    : endpoint_(std::move(endpoint)), options_(options), state_(std::make_unique<State>()) {}

RemoteEmbedder::~RemoteEmbedder() = default;

std::vector<Vec> RemoteEmbedder::request(std::span<const std::string> texts) const {
    const detail::EndpointParts parts = detail::split_endpoint(endpoint_);

    json body;
    body["texts"] = json::array();
    for (const auto& t : texts) {
        body["texts"].push_back(t);
    }
    const std::string payload = body.dump();

    httplib::Result res;
    int backoff_ms = options_.initial_backoff_ms;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
            backoff_ms *= 2;
        }
        httplib::Client client(parts.base);
        client.set_connection_timeout(options_.timeout_sec, 0);
        client.set_read_timeout(options_.timeout_sec, 0);
        res = client.Post(parts.path_root + "/embed", payload, "application/json");
        if (res) {
            break;
        }
    }
    if (!res) {
        throw TransportError("embedding service unreachable: " + endpoint_);
    }
    if (res->status != 200) {
        throw EmbedderFailure("embedding service returned HTTP " + std::to_string(res->status));
    }

    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed embedding response: ") + e.what());
    }
    if (!reply.is_object() || !reply.contains("model") || !reply.contains("dimension") ||
        !reply.contains("embeddings") || !reply["embeddings"].is_array()) {
        throw ProtocolError("embedding response missing model/dimension/embeddings");
    }

    EmbedderFingerprint reported;
    try {
        reported.name = reply["model"].get<std::string>();
        reported.dimension = reply["dimension"].get<int>();
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed embedding response: ") + e.what());
    }
    reported.params_digest =
        to_hex(fnv1a64(reported.name + ":" + std::to_string(reported.dimension)));

    {
        std::lock_guard lock(state_->mutex);
        if (state_->pinned && !(*state_->pinned == reported)) {
            throw DimensionDriftError("service now reports model '" + reported.name + "' dim " +
                                      std::to_string(reported.dimension) + ", fingerprint was '" +
                                      state_->pinned->name + "' dim " +
                                      std::to_string(state_->pinned->dimension));
        }
        state_->pinned = reported;
    }

    const auto& rows = reply["embeddings"];
    if (rows.size() != texts.size()) {
        throw ProtocolError("embedding count mismatch: sent " + std::to_string(texts.size()) +
                            " texts, received " + std::to_string(rows.size()) + " vectors");
    }

    std::vector<Vec> out;
    out.reserve(rows.size());
    for (const auto& row : rows) {
        if (!row.is_array() || static_cast<int>(row.size()) != reported.dimension) {
            throw ProtocolError("embedding row does not match reported dimension");
        }
        Vec v(reported.dimension);
        for (int i = 0; i < reported.dimension; ++i) {
            if (!row[static_cast<size_t>(i)].is_number()) {
                throw ProtocolError("non-numeric embedding entry");
            }
            v[i] = row[static_cast<size_t>(i)].get<double>();
        }
        if (v.norm() == 0.0) {
            throw ProtocolError("service returned a zero embedding");
        }
        out.push_back(l2_normalize(v));
    }
    return out;
}

Vec RemoteEmbedder::embed(std::string_view text) const {
    if (is_blank(text)) {
        throw EmptyInputError("embed: empty input text");
    }
    const std::vector<std::string> one{std::string(text)};
    return request(one)[0];
}

std::vector<Vec> RemoteEmbedder::embed_batch(std::span<const std::string> texts) const {
    if (texts.empty()) {
        throw EmptyInputError("embed_batch: empty batch");
    }
    for (const auto& t : texts) {
        if (is_blank(t)) {
            throw EmptyInputError("embed_batch: empty input text in batch");
        }
    }
    return request(texts);
}

int RemoteEmbedder::dimension() const {
    return fingerprint().dimension;
}

EmbedderFingerprint RemoteEmbedder::fingerprint() const {
    {
        std::lock_guard lock(state_->mutex);
        if (state_->pinned) {
            return *state_->pinned;
        }
    }
    // No response seen yet: probe once to pin the reported model identity.
    const std::vector<std::string> probe{"fingerprint probe"};
    request(probe);
    std::lock_guard lock(state_->mutex);
    return *state_->pinned;
}

// ---------------------------------------------------------------------------
// Spec parsing
// ---------------------------------------------------------------------------

std::unique_ptr<Embedder> make_embedder(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);

    if (kind == "hash") {
        int dim = 256;
        std::uint64_t seed = 0;
        size_t pos = 0;
        while (pos < rest.size()) {
            const auto next = rest.find(':', pos);
            const std::string item =
                rest.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
            pos = next == std::string::npos ? rest.size() : next + 1;
            if (item.empty()) {
                continue;
            }
            const auto eq = item.find('=');
            if (eq == std::string::npos) {
                throw SchemaError("embedder spec item '" + item + "' is not key=value");
            }
            const std::string key = item.substr(0, eq);
            const std::string value = item.substr(eq + 1);
            try {
                if (key == "dim") {
                    dim = std::stoi(value);
                } else if (key == "seed") {
                    seed = std::stoull(value);
                } else {
                    throw SchemaError("unknown hash embedder option '" + key + "'");
                }
            } catch (const std::logic_error&) {
                throw SchemaError("bad value for embedder option '" + key + "': " + value);
            }
        }
        return std::make_unique<HashEmbedder>(dim, seed);
    }
    if (kind == "remote") {
        constexpr std::string_view prefix = "url=";
        if (rest.rfind(prefix, 0) != 0 || rest.size() == prefix.size()) {
            throw SchemaError("remote embedder spec must be remote:url=<endpoint>");
        }
        return std::make_unique<RemoteEmbedder>(rest.substr(prefix.size()));
    }
    throw SchemaError("unknown embedder kind '" + kind + "' (expected hash or remote)");
}

} // namespace gar
