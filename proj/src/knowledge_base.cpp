#include "gar/knowledge_base.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace gar {

using ojson = nlohmann::ordered_json;

void KnowledgeBase::add(Snippet snippet) {
    if (by_id_.contains(snippet.id)) {
        throw DuplicateIdError("snippet id " + std::to_string(snippet.id) + " already present");
    }
    if (snippet.embedding) {
        const int dim = static_cast<int>(snippet.embedding->size());
        if (dimension_ == 0) {
            dimension_ = dim;
        } else if (dim != dimension_) {
            throw DimensionMismatchError("snippet " + std::to_string(snippet.id) + " has dim " +
                                         std::to_string(dim) + ", knowledge base has " +
                                         std::to_string(dimension_));
        }
    }
    by_id_.emplace(snippet.id, snippets_.size());
    snippets_.push_back(std::move(snippet));
}

void KnowledgeBase::embed_all(const Embedder& e) {
    if (snippets_.empty()) {
        throw EmptyKnowledgeBaseError("embed_all on empty knowledge base");
    }
    std::vector<std::string> texts;
    texts.reserve(snippets_.size());
    for (const auto& s : snippets_) {
        texts.push_back(flatten_for_embedding(s.text));
    }
    std::vector<Vec> vectors = e.embed_batch(texts);
    for (size_t i = 0; i < snippets_.size(); ++i) {
        snippets_[i].embedding = std::move(vectors[i]);
    }
    dimension_ = static_cast<int>(snippets_.front().embedding->size());
    fingerprint_ = e.fingerprint();
}

const Snippet* KnowledgeBase::find(SnippetId id) const {
    const auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &snippets_[it->second];
}

bool KnowledgeBase::fully_embedded() const {
    if (snippets_.empty()) {
        return false;
    }
    for (const auto& s : snippets_) {
        if (!s.embedding) {
            return false;
        }
    }
    return true;
}

void KnowledgeBase::set_fingerprint(EmbedderFingerprint fp) {
    fingerprint_ = std::move(fp);
}

void KnowledgeBase::set_dimension(int dim) {
    dimension_ = dim;
}

void validate_kb(const KnowledgeBase& kb) {
    std::set<SnippetId> seen;
    bool any_embedded = false;
    for (const auto& s : kb.snippets()) {
        validate_snippet(s);
        if (!seen.insert(s.id).second) {
            throw SchemaError("duplicate snippet id " + std::to_string(s.id));
        }
        if (s.embedding) {
            any_embedded = true;
            if (static_cast<int>(s.embedding->size()) != kb.dimension()) {
                throw SchemaError("snippet " + std::to_string(s.id) + " dimension " +
                                  std::to_string(s.embedding->size()) +
                                  " disagrees with knowledge base dimension " +
                                  std::to_string(kb.dimension()));
            }
        }
    }
    if (any_embedded && !kb.fingerprint()) {
        throw FingerprintMismatchError("embedded vectors present but no embedder fingerprint recorded");
    }
    if (kb.fingerprint() && kb.dimension() != 0 && kb.fingerprint()->dimension != kb.dimension()) {
        throw FingerprintMismatchError(
            "fingerprint dimension " + std::to_string(kb.fingerprint()->dimension) +
            " disagrees with knowledge base dimension " + std::to_string(kb.dimension()));
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

void require_keys(const ojson& obj, const std::set<std::string>& required,
                  const std::set<std::string>& optional, const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (!required.contains(key) && !optional.contains(key)) {
            throw SchemaError("unknown field '" + key + "' in " + where);
        }
    }
    for (const auto& key : required) {
        if (!obj.contains(key)) {
            throw SchemaError("missing field '" + key + "' in " + where);
        }
    }
}

ojson fingerprint_to_json(const EmbedderFingerprint& fp) {
    ojson j;
    j["name"] = fp.name;
    j["dimension"] = fp.dimension;
    j["params_digest"] = fp.params_digest;
    return j;
}

EmbedderFingerprint fingerprint_from_json(const ojson& j) {
    require_keys(j, {"name", "dimension", "params_digest"}, {}, "manifest embedder");
    EmbedderFingerprint fp;
    fp.name = j["name"].get<std::string>();
    fp.dimension = j["dimension"].get<int>();
    fp.params_digest = j["params_digest"].get<std::string>();
    return fp;
}

} // namespace

std::string snippet_to_jsonl(const Snippet& s) {
    ojson j;
    j["id"] = s.id;
    j["metadata"] = {{"disease_domain", s.metadata.disease_domain},
                     {"title", s.metadata.title},
                     {"year", s.metadata.year},
                     {"organization", s.metadata.organization}};
    j["text"] = {{"chapter", s.text.chapter},
                 {"section", s.text.section},
                 {"content", s.text.content},
                 {"content_kind", to_string(s.text.content_kind)}};
    j["category"] = to_string(s.category);
    ojson extras = ojson::array();
    for (const auto& [k, v] : s.extras) {
        extras.push_back(ojson::array({k, v}));
    }
    j["extras"] = extras;
    if (s.embedding) {
        ojson vec = ojson::array();
        for (Eigen::Index i = 0; i < s.embedding->size(); ++i) {
            vec.push_back((*s.embedding)[i]);
        }
        j["embedding"] = vec;
    }
    return j.dump();
}

Snippet snippet_from_jsonl(const std::string& line) {
    ojson j;
    try {
        j = ojson::parse(line);
    } catch (const ojson::exception& e) {
        throw SchemaError(std::string("bad corpus line: ") + e.what());
    }
    if (!j.is_object()) {
        throw SchemaError("corpus line is not an object");
    }
    require_keys(j, {"id", "metadata", "text", "category", "extras"}, {"embedding"}, "snippet");

    Snippet s;
    try {
        s.id = j["id"].get<SnippetId>();

        const auto& m = j["metadata"];
        require_keys(m, {"disease_domain", "title", "year", "organization"}, {}, "snippet metadata");
        s.metadata.disease_domain = m["disease_domain"].get<std::string>();
        s.metadata.title = m["title"].get<std::string>();
        s.metadata.year = m["year"].get<int>();
        s.metadata.organization = m["organization"].get<std::string>();

        const auto& t = j["text"];
        require_keys(t, {"chapter", "section", "content", "content_kind"}, {}, "snippet text");
        s.text.chapter = t["chapter"].get<std::string>();
        s.text.section = t["section"].get<std::string>();
        s.text.content = t["content"].get<std::string>();
        s.text.content_kind = content_kind_from_string(t["content_kind"].get<std::string>());

        s.category = category_from_string(j["category"].get<std::string>());

        for (const auto& pair : j["extras"]) {
            if (!pair.is_array() || pair.size() != 2) {
                throw SchemaError("extras entries must be [key, value] pairs");
            }
            s.extras.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
        }

        if (j.contains("embedding")) {
            const auto& vec = j["embedding"];
            if (!vec.is_array() || vec.empty()) {
                throw SchemaError("embedding must be a non-empty array");
            }
            Vec v(static_cast<Eigen::Index>(vec.size()));
            for (size_t i = 0; i < vec.size(); ++i) {
                if (!vec[i].is_number()) {
                    throw SchemaError("non-numeric embedding entry");
                }
                v[static_cast<Eigen::Index>(i)] = vec[i].get<double>();
            }
            s.embedding = std::move(v);
        }
    } catch (const ojson::exception& e) {
        throw SchemaError(std::string("bad corpus line: ") + e.what());
    }
    return s;
}

void save_kb(const KnowledgeBase& kb, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
    }

    // Stage to temp files first so an interrupted save never leaves a
    // half-written knowledge base behind.
    const fs::path corpus_tmp = dir / "corpus.jsonl.tmp";
    const fs::path manifest_tmp = dir / "manifest.json.tmp";
    {
        std::ofstream out(corpus_tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write " + corpus_tmp.string());
        }
        for (const auto& s : kb.snippets()) {
            out << snippet_to_jsonl(s) << '\n';
        }
        if (!out) {
            throw IoError("write failed: " + corpus_tmp.string());
        }
    }
    {
        ojson manifest;
        manifest["dimension"] = kb.dimension();
        manifest["embedder"] = kb.fingerprint() ? fingerprint_to_json(*kb.fingerprint())
                                                : ojson(nullptr);
        std::ofstream out(manifest_tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write " + manifest_tmp.string());
        }
        out << manifest.dump(2) << '\n';
        if (!out) {
            throw IoError("write failed: " + manifest_tmp.string());
        }
    }
    fs::rename(corpus_tmp, dir / "corpus.jsonl", ec);
    if (!ec) {
        fs::rename(manifest_tmp, dir / "manifest.json", ec);
    }
    if (ec) {
        throw IoError("cannot finalize knowledge base in " + dir.string() + ": " + ec.message());
    }
}

KnowledgeBase load_kb(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const fs::path corpus_path = dir / "corpus.jsonl";
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(corpus_path) || !fs::exists(manifest_path)) {
        throw IoError("knowledge base files missing under " + dir.string());
    }

    KnowledgeBase kb;
    {
        std::ifstream in(manifest_path, std::ios::binary);
        if (!in) {
            throw IoError("cannot read " + manifest_path.string());
        }
        ojson manifest;
        try {
            manifest = ojson::parse(in);
        } catch (const ojson::exception& e) {
            throw SchemaError(std::string("bad manifest: ") + e.what());
        }
        require_keys(manifest, {"dimension", "embedder"}, {}, "manifest");
        kb.set_dimension(manifest["dimension"].get<int>());
        if (!manifest["embedder"].is_null()) {
            kb.set_fingerprint(fingerprint_from_json(manifest["embedder"]));
        }
    }
    {
        std::ifstream in(corpus_path, std::ios::binary);
        if (!in) {
            throw IoError("cannot read " + corpus_path.string());
        }
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) {
                continue;
            }
            try {
                kb.add(snippet_from_jsonl(line));
            } catch (const SchemaError& e) {
                throw SchemaError(corpus_path.string() + ":" + std::to_string(line_no) + ": " +
                                  e.what());
            }
        }
    }
    validate_kb(kb);
    return kb;
}

} // namespace gar
