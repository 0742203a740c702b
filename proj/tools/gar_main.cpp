#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gar/embedder.hpp"
#include "gar/errors.hpp"
#include "gar/eval.hpp"
#include "gar/ingest.hpp"
#include "gar/knowledge_base.hpp"
#include "gar/query.hpp"
#include "gar/retrieval.hpp"
#include "gar/service.hpp"

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

/// Effective settings for one invocation: config-file values overlaid with
/// command-line flags (flags win).
struct RunConfig {
    std::string kb_path;
    std::string embedder_spec = "hash:dim=256:seed=0";
    gar::RetrievalConfig retrieval;
    gar::WeightingConfig weighting;
    std::string criterion_spec = "semantic";
    std::string bind = "127.0.0.1:8080";
};

std::optional<gar::Category> parse_context(const std::string& name) {
    if (name.empty() || name == "none") {
        return std::nullopt;
    }
    return gar::category_from_string(name);
}

std::vector<double> parse_weights_csv(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            size_t consumed = 0;
            out.push_back(std::stod(item, &consumed));
            if (consumed != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            throw gar::SchemaError("bad weight '" + item + "' in --weights");
        }
    }
    if (out.empty()) {
        throw gar::SchemaError("--weights needs at least one value");
    }
    return out;
}

void apply_config_file(const std::string& path, RunConfig& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw gar::IoError("cannot read config file " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    json j;
    try {
        j = json::parse(buf.str());
    } catch (const json::exception& e) {
        throw gar::SchemaError("bad config file " + path + ": " + e.what());
    }
    if (!j.is_object()) {
        throw gar::SchemaError("config file root must be an object");
    }
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "kb") {
                cfg.kb_path = value.get<std::string>();
            } else if (key == "embedder") {
                cfg.embedder_spec = value.get<std::string>();
            } else if (key == "k") {
                cfg.retrieval.k = value.get<size_t>();
            } else if (key == "tau") {
                cfg.retrieval.tau = value.get<double>();
            } else if (key == "dedup") {
                cfg.retrieval.dedup_threshold = value.get<double>();
            } else if (key == "context") {
                cfg.retrieval.context =
                    value.is_null() ? std::nullopt : parse_context(value.get<std::string>());
            } else if (key == "boost") {
                cfg.retrieval.context_boost = value.get<double>();
            } else if (key == "lambda") {
                cfg.weighting.mode = gar::WeightingMode::time_decay;
                cfg.weighting.lambda = value.get<double>();
            } else if (key == "current_weight") {
                cfg.weighting.current_weight = value.get<double>();
            } else if (key == "weights") {
                if (!value.is_null()) {
                    cfg.weighting.mode = gar::WeightingMode::fixed;
                    cfg.weighting.fixed_weights = value.get<std::vector<double>>();
                }
            } else if (key == "history_window") {
                cfg.weighting.history_window = value.get<size_t>();
            } else if (key == "criterion") {
                cfg.criterion_spec = value.get<std::string>();
            } else if (key == "bind") {
                cfg.bind = value.get<std::string>();
            } else {
                throw gar::SchemaError("unknown config key '" + key + "' in " + path);
            }
        }
    } catch (const json::exception& e) {
        throw gar::SchemaError("bad config file " + path + ": " + e.what());
    }
}

/// Raw flag storage shared by all subcommands; presence is checked via
/// sub->count() so file-provided values survive when a flag is absent.
struct FlagVals {
    std::string kb;
    std::string embedder;
    std::string config_path;
    std::string context;
    std::string weights_csv;
    std::string criterion;
    std::string bind;
    size_t k = 5;
    double tau = 0.30;
    double dedup = 0.95;
    double boost = 1.1;
    double lambda = 0.1;
    double current_weight = 0.6;
    size_t window = 2;
};

void add_common_flags(CLI::App* sub, FlagVals& v) {
    sub->add_option("--kb", v.kb, "knowledge base directory");
    sub->add_option("--embedder", v.embedder,
                    "embedder spec: hash:dim=N:seed=S | remote:url=URL");
    sub->add_option("--config", v.config_path, "JSON config file; flags override it");
    sub->add_option("--k", v.k, "results per query");
    sub->add_option("--tau", v.tau, "minimum cosine similarity");
    sub->add_option("--dedup", v.dedup, "near-duplicate cosine threshold");
    sub->add_option("--context", v.context,
                    "category to boost (classification_diagnostic | measurement_monitoring | "
                    "intervention_treatment | none)");
    sub->add_option("--boost", v.boost, "score multiplier for the context category");
    sub->add_option("--lambda", v.lambda, "time-decay rate for historical records");
    sub->add_option("--current-weight", v.current_weight,
                    "weight share of the current record (time-decay mode)");
    sub->add_option("--weights", v.weights_csv,
                    "fixed part weights w0,w1,... (overrides time decay)");
    sub->add_option("--window", v.window, "most-recent historical records to keep");
    sub->add_option("--criterion", v.criterion,
                    "correctness criterion: exact | semantic | semantic:theta=T");
    sub->add_option("--bind", v.bind, "HOST:PORT for the query service");
}

RunConfig resolve_config(const CLI::App* sub, const FlagVals& v, bool kb_required = true) {
    RunConfig cfg;
    if (sub->count("--config") > 0) {
        apply_config_file(v.config_path, cfg);
    }
    if (sub->count("--kb") > 0) {
        cfg.kb_path = v.kb;
    }
    if (sub->count("--embedder") > 0) {
        cfg.embedder_spec = v.embedder;
    }
    if (sub->count("--k") > 0) {
        cfg.retrieval.k = v.k;
    }
    if (sub->count("--tau") > 0) {
        cfg.retrieval.tau = v.tau;
    }
    if (sub->count("--dedup") > 0) {
        cfg.retrieval.dedup_threshold = v.dedup;
    }
    if (sub->count("--context") > 0) {
        cfg.retrieval.context = parse_context(v.context);
    }
    if (sub->count("--boost") > 0) {
        cfg.retrieval.context_boost = v.boost;
    }
    if (sub->count("--lambda") > 0) {
        cfg.weighting.mode = gar::WeightingMode::time_decay;
        cfg.weighting.lambda = v.lambda;
    }
    if (sub->count("--current-weight") > 0) {
        cfg.weighting.current_weight = v.current_weight;
    }
    if (sub->count("--weights") > 0) {
        cfg.weighting.mode = gar::WeightingMode::fixed;
        cfg.weighting.fixed_weights = parse_weights_csv(v.weights_csv);
    }
    if (sub->count("--window") > 0) {
        cfg.weighting.history_window = v.window;
    }
    if (sub->count("--criterion") > 0) {
        cfg.criterion_spec = v.criterion;
    }
    if (sub->count("--bind") > 0) {
        cfg.bind = v.bind;
    }
    if (kb_required && cfg.kb_path.empty()) {
        throw gar::SchemaError("--kb is required (as a flag or in the config file)");
    }
    cfg.retrieval.validate();
    cfg.weighting.validate();
    gar::parse_criterion_spec(cfg.criterion_spec);
    return cfg;
}

ordered_json config_echo(const RunConfig& cfg) {
    ordered_json j;
    j["kb"] = cfg.kb_path;
    j["embedder"] = cfg.embedder_spec;
    j["k"] = cfg.retrieval.k;
    j["tau"] = cfg.retrieval.tau;
    j["dedup_threshold"] = cfg.retrieval.dedup_threshold;
    if (cfg.retrieval.context) {
        j["context"] = gar::to_string(*cfg.retrieval.context);
    } else {
        j["context"] = nullptr;
    }
    j["context_boost"] = cfg.retrieval.context_boost;
    ordered_json w;
    w["mode"] = cfg.weighting.mode == gar::WeightingMode::fixed ? "fixed" : "time_decay";
    w["lambda"] = cfg.weighting.lambda;
    w["current_weight"] = cfg.weighting.current_weight;
    if (cfg.weighting.mode == gar::WeightingMode::fixed) {
        w["fixed_weights"] = cfg.weighting.fixed_weights;
    } else {
        w["fixed_weights"] = nullptr;
    }
    w["history_window"] = cfg.weighting.history_window;
    j["weighting"] = std::move(w);
    j["criterion"] = cfg.criterion_spec;
    return j;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw gar::IoError("cannot read " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_ingest(const std::vector<std::string>& docs, const RunConfig& cfg) {
    gar::KnowledgeBase kb;
    gar::SnippetId next_id = 1;
    for (const auto& path : docs) {
        try {
            const std::string text = read_file(path);
            const gar::GuidelineDocument doc = gar::parse_guideline_document(path, text);
            const auto snippets = gar::parse_annotated_document(doc, next_id);
            next_id += snippets.size();
            for (const auto& s : snippets) {
                kb.add(s);
            }
            std::cout << path << ": " << snippets.size() << " snippets\n";
        } catch (const gar::Error& e) {
            std::cerr << path << ": " << e.what() << "\n";
            return 1;
        }
    }
    try {
        gar::save_kb(kb, cfg.kb_path);
    } catch (const gar::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    std::cout << "wrote " << kb.size() << " snippets to " << cfg.kb_path << "\n";
    return 0;
}

int cmd_embed(const RunConfig& cfg) {
    try {
        gar::KnowledgeBase kb = gar::load_kb(cfg.kb_path);
        const auto embedder = gar::make_embedder(cfg.embedder_spec);
        kb.embed_all(*embedder);
        gar::save_kb(kb, cfg.kb_path);
        const auto& fp = *kb.fingerprint();
        std::cout << "embedded " << kb.size() << " snippets (dim " << kb.dimension() << ", "
                  << fp.name << "/" << fp.params_digest << ")\n";
        return 0;
    } catch (const gar::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
}

int cmd_query(const std::string& case_path, const RunConfig& cfg) {
    try {
        const gar::KnowledgeBase kb = gar::load_kb(cfg.kb_path);
        const gar::CaseInput c = gar::load_case_file(case_path);
        const auto embedder = gar::make_embedder(cfg.embedder_spec);
        const gar::EmbedderFingerprint fp = embedder->fingerprint();
        const gar::ComposedQuery cq =
            gar::compose_query(c.diagnosis, c.current, c.history, cfg.weighting);
        const gar::Vec q = gar::embed_query(cq, *embedder);
        const auto hits = gar::match_topk(q, kb, cfg.retrieval, fp);
        const gar::SystemOutput out = gar::fuse(c.diagnosis, hits, kb, cfg.retrieval);
        std::cout << gar::render_system_output(out);
        return 0;
    } catch (const gar::FingerprintMismatchError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const gar::SchemaError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const gar::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const gar::MissingCurrentError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const gar::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
}

int cmd_eval(const std::string& cases_path, const RunConfig& cfg, bool ablate) {
    std::vector<gar::GroundTruthCase> cases;
    gar::KnowledgeBase kb;
    std::unique_ptr<gar::Embedder> embedder;
    gar::CorrectnessCriterion criterion;
    try {
        kb = gar::load_kb(cfg.kb_path);
        embedder = gar::make_embedder(cfg.embedder_spec);
        criterion = gar::parse_criterion_spec(cfg.criterion_spec);
        cases = gar::load_ground_truth(cases_path);
    } catch (const gar::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const gar::SchemaError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const gar::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    if (cases.empty()) {
        std::cerr << "no cases in " << cases_path << "; nothing to evaluate\n";
        return 2;
    }

    try {
        ordered_json out;
        out["config"] = config_echo(cfg);
        size_t error_count = 0;
        if (ablate) {
            const auto arms = gar::run_ablation(cases, kb, *embedder, cfg.retrieval,
                                                cfg.weighting, criterion);
            out["arms"] = ordered_json::parse(gar::render_ablation_json(arms))["arms"];
            std::cerr << gar::render_ablation_table(arms);
            for (const auto& arm : arms) {
                error_count += arm.report.errors.size();
            }
        } else {
            const auto report = gar::evaluate_corpus(cases, kb, *embedder, cfg.retrieval,
                                                     cfg.weighting, criterion);
            out["report"] = ordered_json::parse(gar::render_metrics_json(report));
            std::cerr << gar::render_metrics_table(report);
            error_count = report.errors.size();
        }
        std::cout << out.dump(2) << "\n";
        return error_count == 0 ? 0 : 2;
    } catch (const gar::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
}

int cmd_serve(const RunConfig& cfg) {
    try {
        const gar::KnowledgeBase kb = gar::load_kb(cfg.kb_path);
        if (!kb.fully_embedded()) {
            std::cerr << "knowledge base " << cfg.kb_path << " is not embedded; run embed first\n";
            return 1;
        }
        std::shared_ptr<const gar::Embedder> embedder = gar::make_embedder(cfg.embedder_spec);
        const gar::EmbedderFingerprint fp = embedder->fingerprint();
        if (!kb.fingerprint() || fp != *kb.fingerprint()) {
            std::cerr << "embedder spec does not match the knowledge base fingerprint\n";
            return 1;
        }

        const auto colon = cfg.bind.rfind(':');
        if (colon == std::string::npos) {
            throw gar::SchemaError("--bind expects HOST:PORT, got '" + cfg.bind + "'");
        }
        const std::string host = cfg.bind.substr(0, colon);
        int port = 0;
        try {
            port = std::stoi(cfg.bind.substr(colon + 1));
        } catch (const std::exception&) {
            throw gar::SchemaError("bad port in --bind '" + cfg.bind + "'");
        }

        gar::QueryService service(kb, embedder, cfg.retrieval, cfg.weighting);
        std::cerr << "serving " << kb.size() << " snippets on " << host << ":" << port << "\n";
        if (!service.listen(host, port)) {
            std::cerr << "cannot bind " << cfg.bind << "\n";
            return 1;
        }
        return 0;
    } catch (const gar::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"grounded clinical-guideline retrieval over a snippet knowledge base"};
    app.require_subcommand(1);

    FlagVals v;
    std::vector<std::string> doc_paths;
    std::string case_path;
    std::string cases_path;

    CLI::App* ingest = app.add_subcommand(
        "ingest", "parse annotated guideline documents into a knowledge base");
    ingest->add_option("docs", doc_paths, "annotated guideline files")->required();
    add_common_flags(ingest, v);

    CLI::App* embed =
        app.add_subcommand("embed", "embed every snippet and record the embedder fingerprint");
    add_common_flags(embed, v);

    CLI::App* query = app.add_subcommand("query", "answer one case with grounded snippets");
    query->add_option("case", case_path, "case JSON file")->required();
    add_common_flags(query, v);

    CLI::App* eval_cmd = app.add_subcommand("eval", "score retrieval against labeled cases");
    eval_cmd->add_option("cases", cases_path, "ground-truth JSONL file")->required();
    add_common_flags(eval_cmd, v);

    CLI::App* ablate =
        app.add_subcommand("ablate", "compare diagnosis-only / +current / +history arms");
    ablate->add_option("cases", cases_path, "ground-truth JSONL file")->required();
    add_common_flags(ablate, v);

    CLI::App* serve = app.add_subcommand("serve", "serve queries over HTTP");
    add_common_flags(serve, v);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    const CLI::App* active = app.get_subcommands().front();
    RunConfig cfg;
    try {
        cfg = resolve_config(active, v);
    } catch (const gar::IoError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const gar::Error& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    if (active == ingest) {
        return cmd_ingest(doc_paths, cfg);
    }
    if (active == embed) {
        return cmd_embed(cfg);
    }
    if (active == query) {
        return cmd_query(case_path, cfg);
    }
    if (active == eval_cmd) {
        return cmd_eval(cases_path, cfg, false);
    }
    if (active == ablate) {
        return cmd_eval(cases_path, cfg, true);
    }
    if (active == serve) {
        return cmd_serve(cfg);
    }
    return 1;
}
