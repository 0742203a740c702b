#include "gar/retrieval.hpp"

#include <algorithm>

#include <json.hpp>

namespace gar {

using nlohmann::ordered_json;

void RetrievalConfig::validate() const {
    if (k < 1) {
        throw SchemaError("k must be >= 1");
    }
    if (tau < -1.0) {
        throw SchemaError("tau must be >= -1");
    }
    if (dedup_threshold < 0.0) {
        throw SchemaError("dedup_threshold must be >= 0");
    }
    if (context_boost < 1.0) {
        throw SchemaError("context_boost must be >= 1");
    }
}

std::vector<ScoredSnippet> match_topk(const Vec& q, const KnowledgeBase& kb,
                                      const RetrievalConfig& cfg,
                                      const std::optional<EmbedderFingerprint>& fingerprint) {
    cfg.validate();
    if (kb.empty()) {
        throw EmptyKnowledgeBaseError("match_topk: knowledge base is empty");
    }
    if (!kb.fully_embedded()) {
        throw NotEmbeddedError("match_topk: knowledge base is not fully embedded");
    }
    if (q.size() != static_cast<Eigen::Index>(kb.dimension())) {
        throw DimensionMismatchError("query dimension " + std::to_string(q.size()) +
                                     " vs knowledge base " + std::to_string(kb.dimension()));
    }
    if (fingerprint) {
        if (!kb.fingerprint()) {
            throw FingerprintMismatchError("knowledge base has no recorded embedder fingerprint");
        }
        if (*fingerprint != *kb.fingerprint()) {
            throw FingerprintMismatchError("query embedder '" + fingerprint->name + "/" +
                                           fingerprint->params_digest +
                                           "' does not match knowledge base '" +
                                           kb.fingerprint()->name + "/" +
                                           kb.fingerprint()->params_digest + "'");
        }
    }

    std::vector<ScoredSnippet> hits;
    for (const auto& s : kb.snippets()) {
        const double score = cosine_similarity(q, *s.embedding);
        if (score >= cfg.tau) {
            hits.push_back({s.id, score, 0});
        }
    }
    std::sort(hits.begin(), hits.end(), [](const ScoredSnippet& a, const ScoredSnippet& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.snippet_id < b.snippet_id;
    });
    if (hits.size() > cfg.k) {
        hits.resize(cfg.k);
    }
    for (size_t i = 0; i < hits.size(); ++i) {
        hits[i].rank = static_cast<int>(i + 1);
    }
    return hits;
}

std::vector<ScoredSnippet> deduplicate(const std::vector<ScoredSnippet>& candidates,
                                       const KnowledgeBase& kb, double theta_dup) {
    std::vector<ScoredSnippet> kept;
    std::vector<const Vec*> kept_vectors;
    for (const auto& cand : candidates) {
        const Snippet* s = kb.find(cand.snippet_id);
        if (s == nullptr || !s->embedding) {
            throw NotEmbeddedError("deduplicate: candidate snippet " +
                                   std::to_string(cand.snippet_id) + " is not in the knowledge base");
        }
        bool redundant = false;
        for (const Vec* v : kept_vectors) {
            if (cosine_similarity(*s->embedding, *v) >= theta_dup) {
                redundant = true;
                break;
            }
        }
        if (!redundant) {
            kept.push_back(cand);
            kept_vectors.push_back(&*s->embedding);
        }
    }
    for (size_t i = 0; i < kept.size(); ++i) {
        kept[i].rank = static_cast<int>(i + 1);
    }
    return kept;
}

std::vector<ScoredSnippet> context_rerank(const std::vector<ScoredSnippet>& candidates,
                                          const KnowledgeBase& kb,
                                          const std::optional<Category>& context, double boost) {
    std::vector<ScoredSnippet> out = candidates;
    if (context && boost != 1.0) {
        std::vector<double> effective(out.size());
        for (size_t i = 0; i < out.size(); ++i) {
            const Snippet* s = kb.find(out[i].snippet_id);
            const bool on_context = s != nullptr && s->category == *context;
            effective[i] = on_context ? out[i].score * boost : out[i].score;
        }
        std::vector<size_t> order(out.size());
        for (size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (effective[a] != effective[b]) {
                return effective[a] > effective[b];
            }
            return out[a].snippet_id < out[b].snippet_id;
        });
        std::vector<ScoredSnippet> sorted;
        sorted.reserve(out.size());
        for (size_t idx : order) {
            sorted.push_back(out[idx]);
        }
        out = std::move(sorted);
    }
    for (size_t i = 0; i < out.size(); ++i) {
        out[i].rank = static_cast<int>(i + 1);
    }
    return out;
}

SystemOutput fuse(const DiagnosticOutput& diagnosis, const std::vector<ScoredSnippet>& candidates,
                  const KnowledgeBase& kb, const RetrievalConfig& cfg) {
    cfg.validate();
    SystemOutput out;
    out.diagnosis = diagnosis;
    out.config = cfg;
    if (candidates.empty()) {
        return out;
    }
    auto fused = deduplicate(candidates, kb, cfg.dedup_threshold);
    fused = context_rerank(fused, kb, cfg.context, cfg.context_boost);
    out.recommendations.reserve(fused.size());
    for (const auto& scored : fused) {
        const Snippet* s = kb.find(scored.snippet_id);
        out.recommendations.push_back(
            {scored, *s, metadata_canonical_string(s->metadata)});
    }
    return out;
}

std::string render_system_output(const SystemOutput& out) {
    ordered_json j;
    j["diagnosis"] = ordered_json::array();
    for (const auto& e : out.diagnosis.entries) {
        j["diagnosis"].push_back({{"icd", e.icd_code}, {"label", e.label}});
    }
    j["recommendations"] = ordered_json::array();
    for (const auto& rec : out.recommendations) {
        ordered_json r;
        r["rank"] = rec.scored.rank;
        r["score"] = rec.scored.score;
        r["snippet_id"] = rec.scored.snippet_id;
        r["chapter"] = rec.snippet.text.chapter;
        r["section"] = rec.snippet.text.section;
        r["content"] = rec.snippet.text.content;
        r["category"] = to_string(rec.snippet.category);
        r["provenance"] = rec.provenance;
        ordered_json extras = ordered_json::array();
        for (const auto& [key, value] : rec.snippet.extras) {
            extras.push_back(ordered_json::array({key, value}));
        }
        r["extras"] = std::move(extras);
        j["recommendations"].push_back(std::move(r));
    }
    ordered_json cfg;
    cfg["k"] = out.config.k;
    cfg["tau"] = out.config.tau;
    cfg["dedup_threshold"] = out.config.dedup_threshold;
    if (out.config.context) {
        cfg["context"] = to_string(*out.config.context);
    } else {
        cfg["context"] = nullptr;
    }
    cfg["context_boost"] = out.config.context_boost;
    j["config"] = std::move(cfg);
    return j.dump(2) + "\n";
}

} // namespace gar
