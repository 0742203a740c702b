#include "gar/service.hpp"

#include <httplib.h>
#include <json.hpp>

#include "gar/errors.hpp"

namespace gar {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string error_body(const std::string& message) {
    ordered_json j;
    j["error"] = message;
    return j.dump(2) + "\n";
}

} // namespace

QueryService::QueryService(const KnowledgeBase& kb, std::shared_ptr<const Embedder> embedder,
                           RetrievalConfig retrieval, WeightingConfig weighting)
    : kb_(kb), embedder_(std::move(embedder)), retrieval_(std::move(retrieval)),
      weighting_(std::move(weighting)), server_(std::make_unique<httplib::Server>()) {
    retrieval_.validate();
    weighting_.validate();

    server_->Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
        std::string body;
        int status = 200;
        handle_health(body, status);
        res.status = status;
        res.set_content(body, "application/json");
    });
    server_->Post("/v1/query", [this](const httplib::Request& req, httplib::Response& res) {
        std::string body;
        int status = 200;
        handle_query(req.body, body, status);
        res.status = status;
        res.set_content(body, "application/json");
    });
}

QueryService::~QueryService() {
    server_->stop();
}

bool QueryService::listen(const std::string& host, int port) {
    return server_->listen(host, port);
}

int QueryService::bind_any_port(const std::string& host) {
    return server_->bind_to_any_port(host);
}

bool QueryService::listen_after_bind() {
    return server_->listen_after_bind();
}

void QueryService::stop() {
    server_->stop();
}

bool QueryService::is_running() const {
    return server_->is_running();
}

void QueryService::handle_health(std::string& body, int& status) const {
    ordered_json j;
    j["snippets"] = kb_.size();
    j["dimension"] = kb_.dimension();
    if (kb_.fingerprint()) {
        const auto& fp = *kb_.fingerprint();
        j["fingerprint"] = {{"name", fp.name},
                            {"dimension", fp.dimension},
                            {"params_digest", fp.params_digest}};
    } else {
        j["fingerprint"] = nullptr;
    }
    body = j.dump(2) + "\n";
    status = 200;
}

void QueryService::handle_query(const std::string& request_body, std::string& body,
                                int& status) const {
    try {
        json parsed;
        try {
            parsed = json::parse(request_body);
        } catch (const json::exception& e) {
            throw SchemaError(std::string("bad request body: ") + e.what());
        }
        if (!parsed.is_object()) {
            throw SchemaError("request body must be a JSON object");
        }

        std::unique_ptr<Embedder> override_embedder;
        if (parsed.contains("embedder")) {
            if (!parsed["embedder"].is_string()) {
                throw SchemaError("'embedder' must be a spec string");
            }
            override_embedder = make_embedder(parsed["embedder"].get<std::string>());
            parsed.erase("embedder");
        }
        const Embedder& embedder = override_embedder ? *override_embedder : *embedder_;

        const CaseInput c = case_from_json_text(parsed.dump());
        const EmbedderFingerprint fp = embedder.fingerprint();
        const ComposedQuery cq = compose_query(c.diagnosis, c.current, c.history, weighting_);
        const Vec q = embed_query(cq, embedder);
        const auto hits = match_topk(q, kb_, retrieval_, fp);
        const SystemOutput out = fuse(c.diagnosis, hits, kb_, retrieval_);

        body = render_system_output(out);
        status = 200;
    } catch (const FingerprintMismatchError& e) {
        body = error_body(e.what());
        status = 409;
    } catch (const DimensionMismatchError& e) {
        body = error_body(e.what());
        status = 409;
    } catch (const SchemaError& e) {
        body = error_body(e.what());
        status = 400;
    } catch (const ParseError& e) {
        body = error_body(e.what());
        status = 400;
    } catch (const MissingCurrentError& e) {
        body = error_body(e.what());
        status = 400;
    } catch (const std::exception& e) {
        body = error_body(e.what());
        status = 500;
    }
}

} // namespace gar
