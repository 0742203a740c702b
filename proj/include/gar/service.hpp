#pragma once

#include <memory>
#include <string>

#include "gar/embedder.hpp"
#include "gar/knowledge_base.hpp"
#include "gar/query.hpp"
#include "gar/retrieval.hpp"

namespace httplib {
class Server;
}

namespace gar {

/// Read-only HTTP front end over an immutable knowledge-base snapshot.
///
///   POST /v1/query  case-file JSON (optionally with an "embedder" spec
///                   string) -> SystemOutput JSON. 400 on schema problems,
///                   409 when the requested embedder does not match the
///                   knowledge base, 500 otherwise.
///   GET  /v1/health -> {"snippets", "dimension", "fingerprint"}.
///
/// The query path shares its JSON rendering with the CLI, so both surfaces
/// emit byte-identical documents for identical inputs.
class QueryService {
public:
    /// The knowledge base must outlive the service and stay unmodified while
    /// it runs. The embedder handles requests that carry no spec override.
    QueryService(const KnowledgeBase& kb, std::shared_ptr<const Embedder> embedder,
                 RetrievalConfig retrieval, WeightingConfig weighting);
    ~QueryService();

    QueryService(const QueryService&) = delete;
    QueryService& operator=(const QueryService&) = delete;

    /// Blocking serve loop on a fixed port. Returns false if binding fails.
    bool listen(const std::string& host, int port);

    /// Binds an OS-assigned port and returns it, for in-process use;
    /// follow with listen_after_bind() on a worker thread.
    int bind_any_port(const std::string& host);
    bool listen_after_bind();

    /// Stops the serve loop from any thread.
    void stop();

    /// True once the serve loop is accepting connections.
    bool is_running() const;

private:
    void handle_health(std::string& body, int& status) const;
    void handle_query(const std::string& request_body, std::string& body, int& status) const;

    const KnowledgeBase& kb_;
    std::shared_ptr<const Embedder> embedder_;
    RetrievalConfig retrieval_;
    WeightingConfig weighting_;
    std::unique_ptr<httplib::Server> server_;
};

} // namespace gar
