#include "gar/eval.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <httplib.h>
#include <json.hpp>

#include "gar/text.hpp"
#include "http_util.hpp"

namespace gar {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Sentence handling
// ---------------------------------------------------------------------------

namespace {

const std::unordered_set<std::string>& abbrev_tokens() {
    // Unit and abbreviation tokens whose trailing period does not end a
    // sentence. Compared lowercase.
    static const std::unordered_set<std::string> tokens = {
        "mg", "mcg", "g", "kg", "ml", "dl", "l", "mmhg", "mmol", "cm", "mm",
        "hr", "min", "sec", "no", "vs", "etc", "fig", "tab", "eq", "approx",
        "dr", "mr", "mrs", "ms", "st", "al",
    };
    return tokens;
}

bool period_is_abbreviation(const std::string& text, size_t dot) {
    size_t start = dot;
    while (start > 0 && std::isalnum(static_cast<unsigned char>(text[start - 1]))) {
        --start;
    }
    const size_t len = dot - start;
    if (len == 0) {
        return false; // "..." and friends: always a boundary
    }
    if (len == 1 && std::isalpha(static_cast<unsigned char>(text[start]))) {
        if (std::isupper(static_cast<unsigned char>(text[start]))) {
            return true; // initial, "J. Smith"
        }
        if (start > 0 && text[start - 1] == '.') {
            return true; // dotted abbreviation, "e.g."
        }
    }
    std::string token = text.substr(start, len);
    for (char& c : token) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return abbrev_tokens().count(token) > 0;
}

} // namespace

std::vector<std::string> sentence_split(const std::string& text) {
    std::vector<std::string> sentences;
    size_t seg_start = 0;
    for (size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c != '.' && c != '!' && c != '?') {
            continue;
        }
        const bool at_boundary =
            i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]));
        if (!at_boundary) {
            continue;
        }
        if (c == '.' && period_is_abbreviation(text, i)) {
            continue;
        }
        std::string sentence = collapse_whitespace(text.substr(seg_start, i - seg_start + 1));
        if (!sentence.empty()) {
            sentences.push_back(std::move(sentence));
        }
        seg_start = i + 1;
    }
    std::string tail = collapse_whitespace(text.substr(seg_start));
    if (!tail.empty()) {
        sentences.push_back(std::move(tail));
    }
    return sentences;
}

bool exact_sentence_overlap(const std::string& candidate, const std::string& reference) {
    const auto cand = sentence_split(candidate);
    if (cand.empty()) {
        return false;
    }
    const auto ref = sentence_split(reference);
    const std::unordered_set<std::string> ref_set(ref.begin(), ref.end());
    for (const auto& s : cand) {
        if (ref_set.count(s) > 0) {
            return true;
        }
    }
    return false;
}

double token_f1_score(const std::string& candidate, const std::string& reference) {
    const auto cand = tokenize(candidate);
    const auto ref = tokenize(reference);
    if (cand.empty() || ref.empty()) {
        return 0.0;
    }
    std::unordered_map<std::string, size_t> ref_counts;
    for (const auto& t : ref) {
        ++ref_counts[t];
    }
    size_t intersection = 0;
    for (const auto& t : cand) {
        auto it = ref_counts.find(t);
        if (it != ref_counts.end() && it->second > 0) {
            --it->second;
            ++intersection;
        }
    }
    if (intersection == 0) {
        return 0.0;
    }
    const double p = static_cast<double>(intersection) / static_cast<double>(cand.size());
    const double r = static_cast<double>(intersection) / static_cast<double>(ref.size());
    return 2.0 * p * r / (p + r);
}

bool semantic_match(const std::string& candidate, const std::string& reference,
                    const Scorer& scorer, double theta) {
    if (!(theta > 0.0) || theta > 1.0) {
        throw SchemaError("semantic threshold must lie in (0, 1]");
    }
    const Scorer& s = scorer ? scorer : Scorer(token_f1_score);
    return s(candidate, reference) >= theta;
}

// ---------------------------------------------------------------------------
// RemoteScorer
// ---------------------------------------------------------------------------

RemoteScorer::RemoteScorer(std::string endpoint) : RemoteScorer(std::move(endpoint), Options()) {}

RemoteScorer::RemoteScorer(std::string endpoint, Options options)
    : endpoint_(std::move(endpoint)), options_(options) {}

std::vector<double> RemoteScorer::score_batch(
    const std::vector<std::pair<std::string, std::string>>& pairs) const {
    if (pairs.empty()) {
        return {};
    }
    const detail::EndpointParts parts = detail::split_endpoint(endpoint_);
    json body;
    body["pairs"] = json::array();
    for (const auto& [cand, ref] : pairs) {
        body["pairs"].push_back(json::array({cand, ref}));
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
        res = client.Post(parts.path_root + "/score", payload, "application/json");
        if (res) {
            break;
        }
    }
    if (!res) {
        throw ScorerFailure("scoring service unreachable: " + endpoint_);
    }
    if (res->status != 200) {
        throw ScorerFailure("scoring service returned HTTP " + std::to_string(res->status));
    }
    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const json::exception& e) {
        throw ScorerFailure(std::string("scoring service sent malformed JSON: ") + e.what());
    }
    if (!reply.is_object() || !reply.contains("scores") || !reply["scores"].is_array() ||
        reply["scores"].size() != pairs.size()) {
        throw ScorerFailure("scoring service reply lacks a matching 'scores' array");
    }
    std::vector<double> scores;
    scores.reserve(pairs.size());
    for (const auto& v : reply["scores"]) {
        if (!v.is_number()) {
            throw ScorerFailure("scoring service returned a non-numeric score");
        }
        scores.push_back(v.get<double>());
    }
    return scores;
}

double RemoteScorer::operator()(const std::string& candidate, const std::string& reference) const {
    return score_batch({{candidate, reference}})[0];
}

bool CorrectnessCriterion::matches(const std::string& candidate,
                                   const std::string& reference) const {
    if (mode == CriterionMode::exact_sentence_overlap) {
        return exact_sentence_overlap(candidate, reference);
    }
    return semantic_match(candidate, reference, scorer, theta);
}

CorrectnessCriterion parse_criterion_spec(const std::string& spec) {
    CorrectnessCriterion out;
    if (spec == "exact") {
        out.mode = CriterionMode::exact_sentence_overlap;
        return out;
    }
    if (spec == "semantic") {
        out.mode = CriterionMode::semantic_threshold;
        return out;
    }
    const std::string prefix = "semantic:theta=";
    if (spec.rfind(prefix, 0) == 0) {
        out.mode = CriterionMode::semantic_threshold;
        const std::string value = spec.substr(prefix.size());
        try {
            size_t consumed = 0;
            out.theta = std::stod(value, &consumed);
            if (consumed != value.size()) {
                throw std::invalid_argument(value);
            }
        } catch (const std::exception&) {
            throw SchemaError("bad criterion theta '" + value + "'");
        }
        if (!(out.theta > 0.0) || out.theta > 1.0) {
            throw SchemaError("criterion theta must lie in (0, 1]");
        }
        return out;
    }
    throw SchemaError("bad criterion spec '" + spec +
                      "', expected exact | semantic | semantic:theta=T");
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

double precision_at_k(const std::vector<bool>& flags, size_t K) {
    if (K < 1) {
        throw SchemaError("precision_at_k: K must be >= 1");
    }
    size_t correct = 0;
    const size_t upto = std::min(K, flags.size());
    for (size_t i = 0; i < upto; ++i) {
        if (flags[i]) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(K);
}

double hits_at_k(const std::vector<std::vector<bool>>& per_query_flags, size_t K) {
    if (K < 1) {
        throw SchemaError("hits_at_k: K must be >= 1");
    }
    if (per_query_flags.empty()) {
        throw EmptyInputError("hits_at_k: no queries");
    }
    size_t hit = 0;
    for (const auto& flags : per_query_flags) {
        const size_t upto = std::min(K, flags.size());
        for (size_t i = 0; i < upto; ++i) {
            if (flags[i]) {
                ++hit;
                break;
            }
        }
    }
    return static_cast<double>(hit) / static_cast<double>(per_query_flags.size());
}

double mrr(const std::vector<std::optional<int>>& first_relevant_ranks) {
    if (first_relevant_ranks.empty()) {
        throw EmptyInputError("mrr: no queries");
    }
    double sum = 0.0;
    for (const auto& rank : first_relevant_ranks) {
        if (rank) {
            sum += 1.0 / static_cast<double>(*rank);
        }
    }
    return sum / static_cast<double>(first_relevant_ranks.size());
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

GroundTruthCase ground_truth_from_jsonl(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("bad case record: ") + e.what());
    }
    if (!j.is_object()) {
        throw SchemaError("case record must be an object");
    }
    for (const auto& [key, _] : j.items()) {
        if (key != "case_id" && key != "query" && key != "relevant_ids" &&
            key != "relevant_texts") {
            throw SchemaError("unknown field '" + key + "' in case record");
        }
    }
    GroundTruthCase out;
    try {
        out.case_id = j.at("case_id").get<std::string>();
        out.query = case_from_json_text(j.at("query").dump());
        if (j.contains("relevant_ids")) {
            for (const auto& v : j["relevant_ids"]) {
                out.relevant_ids.push_back(v.get<SnippetId>());
            }
        }
        if (j.contains("relevant_texts")) {
            for (const auto& v : j["relevant_texts"]) {
                out.relevant_texts.push_back(v.get<std::string>());
            }
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("bad case record: ") + e.what());
    }
    if (out.case_id.empty()) {
        throw SchemaError("case record has empty case_id");
    }
    if (out.relevant_ids.empty() && out.relevant_texts.empty()) {
        throw SchemaError("case '" + out.case_id + "' lists nothing relevant");
    }
    return out;
}

std::vector<GroundTruthCase> load_ground_truth(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read case file " + path);
    }
    std::vector<GroundTruthCase> cases;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) {
            continue;
        }
        try {
            cases.push_back(ground_truth_from_jsonl(line));
        } catch (const Error& e) {
            throw ParseError(path + ": " + e.what(), line_no);
        }
    }
    return cases;
}

// ---------------------------------------------------------------------------
// Corpus evaluation
// ---------------------------------------------------------------------------

namespace {

bool recommendation_is_relevant(const GroundTruthCase& c, const Snippet& s,
                                const CorrectnessCriterion& criterion) {
    for (SnippetId id : c.relevant_ids) {
        if (id == s.id) {
            return true;
        }
    }
    for (const auto& ref : c.relevant_texts) {
        if (criterion.matches(s.text.content, ref)) {
            return true;
        }
    }
    return false;
}

} // namespace

MetricsReport evaluate_corpus(const std::vector<GroundTruthCase>& cases, const KnowledgeBase& kb,
                              const Embedder& embedder, const RetrievalConfig& retrieval_cfg,
                              const WeightingConfig& weighting_cfg,
                              const CorrectnessCriterion& criterion) {
    if (cases.empty()) {
        throw EmptyInputError("evaluate_corpus: no cases");
    }
    const auto& grid = metric_k_grid();
    const size_t k_max = *std::max_element(grid.begin(), grid.end());
    const EmbedderFingerprint fp = embedder.fingerprint();

    MetricsReport report;
    std::map<size_t, double> precision_sum;
    std::map<size_t, size_t> hit_count;
    for (size_t K : grid) {
        precision_sum[K] = 0.0;
        hit_count[K] = 0;
    }
    std::vector<std::optional<int>> ranks;

    for (const auto& c : cases) {
        try {
            for (SnippetId id : c.relevant_ids) {
                if (kb.find(id) == nullptr) {
                    throw SchemaError("case '" + c.case_id + "' references unknown snippet " +
                                      std::to_string(id));
                }
            }
            const ComposedQuery cq =
                compose_query(c.query.diagnosis, c.query.current, c.query.history, weighting_cfg);
            const Vec q = embed_query(cq, embedder);

            for (size_t K : grid) {
                RetrievalConfig cfg_k = retrieval_cfg;
                cfg_k.k = K;
                const auto hits = match_topk(q, kb, cfg_k, fp);
                const SystemOutput output = fuse(c.query.diagnosis, hits, kb, cfg_k);
                std::vector<bool> flags;
                flags.reserve(output.recommendations.size());
                for (const auto& rec : output.recommendations) {
                    flags.push_back(recommendation_is_relevant(c, rec.snippet, criterion));
                }
                precision_sum[K] += precision_at_k(flags, K);
                bool any = false;
                std::optional<int> first_rank;
                for (size_t i = 0; i < flags.size(); ++i) {
                    if (flags[i]) {
                        any = true;
                        first_rank = static_cast<int>(i + 1);
                        break;
                    }
                }
                if (any) {
                    ++hit_count[K];
                }
                if (K == k_max) {
                    ranks.push_back(first_rank);
                    report.per_case_ranks[c.case_id] = first_rank;
                }
            }
        } catch (const std::exception& e) {
            report.errors.emplace_back(c.case_id, e.what());
        }
    }

    report.n = cases.size() - report.errors.size();
    if (report.n > 0) {
        for (size_t K : grid) {
            report.precision_at[K] = precision_sum[K] / static_cast<double>(report.n);
            report.hits_at[K] = static_cast<double>(hit_count[K]) / static_cast<double>(report.n);
        }
        report.mrr = mrr(ranks);
    } else {
        for (size_t K : grid) {
            report.precision_at[K] = 0.0;
            report.hits_at[K] = 0.0;
        }
    }
    return report;
}

std::vector<AblationArm> run_ablation(const std::vector<GroundTruthCase>& cases,
                                      const KnowledgeBase& kb, const Embedder& embedder,
                                      const RetrievalConfig& retrieval_cfg,
                                      const WeightingConfig& weighting_cfg,
                                      const CorrectnessCriterion& criterion) {
    auto strip = [&](bool keep_current, bool keep_history) {
        std::vector<GroundTruthCase> out = cases;
        for (auto& c : out) {
            if (!keep_current) {
                c.query.current.text.clear();
            }
            if (!keep_history) {
                c.query.history.clear();
            }
        }
        return out;
    };
    // The reduced arms run single-part queries, so a fixed weight vector for
    // the full query cannot apply; they use weight 1.0 on the lone part.
    WeightingConfig single_part = weighting_cfg;
    if (single_part.mode == WeightingMode::fixed) {
        single_part.fixed_weights = {1.0};
    }

    std::vector<AblationArm> arms;
    arms.push_back({"diagnosis_only", evaluate_corpus(strip(false, false), kb, embedder,
                                                      retrieval_cfg, single_part, criterion)});
    arms.push_back({"diagnosis_current", evaluate_corpus(strip(true, false), kb, embedder,
                                                         retrieval_cfg, single_part, criterion)});
    arms.push_back({"diagnosis_current_history",
                    evaluate_corpus(cases, kb, embedder, retrieval_cfg, weighting_cfg, criterion)});
    return arms;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace {

ordered_json metrics_to_json(const MetricsReport& report) {
    ordered_json j;
    j["n"] = report.n;
    ordered_json precision, hits;
    for (size_t K : metric_k_grid()) {
        const std::string key = std::to_string(K);
        precision[key] = report.precision_at.count(K) ? report.precision_at.at(K) : 0.0;
        hits[key] = report.hits_at.count(K) ? report.hits_at.at(K) : 0.0;
    }
    j["precision_at"] = std::move(precision);
    j["hits_at"] = std::move(hits);
    j["mrr"] = report.mrr;
    ordered_json ranks = ordered_json::object();
    for (const auto& [case_id, rank] : report.per_case_ranks) {
        if (rank) {
            ranks[case_id] = *rank;
        } else {
            ranks[case_id] = nullptr;
        }
    }
    j["per_case_ranks"] = std::move(ranks);
    ordered_json errors = ordered_json::array();
    for (const auto& [case_id, message] : report.errors) {
        errors.push_back({{"case_id", case_id}, {"message", message}});
    }
    j["errors"] = std::move(errors);
    return j;
}

} // namespace

std::string render_metrics_json(const MetricsReport& report) {
    return metrics_to_json(report).dump(2) + "\n";
}

std::string render_metrics_table(const MetricsReport& report) {
    char buf[128];
    std::string out;
    std::snprintf(buf, sizeof(buf), "%5s  %12s  %8s\n", "K", "Precision@K", "Hits@K");
    out += buf;
    for (size_t K : metric_k_grid()) {
        const double p = report.precision_at.count(K) ? report.precision_at.at(K) : 0.0;
        const double h = report.hits_at.count(K) ? report.hits_at.at(K) : 0.0;
        std::snprintf(buf, sizeof(buf), "%5zu  %12.4f  %8.4f\n", K, p, h);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "%5s  %12.4f\n", "MRR", report.mrr);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%5s  %12zu  errors %zu\n", "N", report.n,
                  report.errors.size());
    out += buf;
    return out;
}

std::string render_ablation_json(const std::vector<AblationArm>& arms) {
    ordered_json j;
    j["arms"] = ordered_json::array();
    for (const auto& arm : arms) {
        ordered_json row;
        row["arm"] = arm.name;
        row["report"] = metrics_to_json(arm.report);
        j["arms"].push_back(std::move(row));
    }
    return j.dump(2) + "\n";
}

std::string render_ablation_table(const std::vector<AblationArm>& arms) {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof(buf), "%-26s", "arm");
    out += buf;
    for (size_t K : metric_k_grid()) {
        std::snprintf(buf, sizeof(buf), "  %7s", ("P@" + std::to_string(K)).c_str());
        out += buf;
    }
    for (size_t K : metric_k_grid()) {
        std::snprintf(buf, sizeof(buf), "  %7s", ("H@" + std::to_string(K)).c_str());
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "  %7s\n", "MRR");
    out += buf;
    for (const auto& arm : arms) {
        std::snprintf(buf, sizeof(buf), "%-26s", arm.name.c_str());
        out += buf;
        for (size_t K : metric_k_grid()) {
            const double p = arm.report.precision_at.count(K) ? arm.report.precision_at.at(K) : 0.0;
            std::snprintf(buf, sizeof(buf), "  %7.4f", p);
            out += buf;
        }
        for (size_t K : metric_k_grid()) {
            const double h = arm.report.hits_at.count(K) ? arm.report.hits_at.at(K) : 0.0;
            std::snprintf(buf, sizeof(buf), "  %7.4f", h);
            out += buf;
        }
        std::snprintf(buf, sizeof(buf), "  %7.4f\n", arm.report.mrr);
        out += buf;
    }
    return out;
}

} // namespace gar
