#include "gar/query.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gar/text.hpp"

namespace gar {

using nlohmann::json;

Date parse_date(const std::string& text) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    if (std::sscanf(text.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3) {
        throw SchemaError("bad date '" + text + "', expected YYYY-MM-DD");
    }
    const Date date{std::chrono::year(y), std::chrono::month(m), std::chrono::day(d)};
    if (!date.ok()) {
        throw SchemaError("invalid calendar date '" + text + "'");
    }
    return date;
}

std::string format_date(const Date& date) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(date.year()),
                  static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
    return buf;
}

long days_between(const Date& from, const Date& to) {
    const std::chrono::sys_days a{from};
    const std::chrono::sys_days b{to};
    return (a - b).count();
}

std::string DiagnosticOutput::rendered() const {
    std::string out;
    for (const auto& e : entries) {
        if (!out.empty()) {
            out += "; ";
        }
        out += e.icd_code;
        if (!e.label.empty()) {
            out += " " + e.label;
        }
    }
    return out;
}

void WeightingConfig::validate() const {
    if (mode == WeightingMode::time_decay) {
        if (!(lambda > 0.0)) {
            throw WeightConfigMismatchError("time_decay mode requires lambda > 0");
        }
        if (!(current_weight > 0.0) || current_weight > 1.0) {
            throw WeightConfigMismatchError("current_weight must lie in (0, 1]");
        }
    } else {
        if (fixed_weights.empty()) {
            throw WeightConfigMismatchError("fixed mode requires fixed_weights");
        }
        double sum = 0.0;
        for (double w : fixed_weights) {
            if (w < 0.0) {
                throw WeightConfigMismatchError("fixed_weights must be non-negative");
            }
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw WeightConfigMismatchError("fixed_weights must sum to 1, got " +
                                            std::to_string(sum));
        }
    }
}

std::vector<double> time_decay_weights(const std::vector<double>& delta_t_days, double lambda) {
    if (delta_t_days.empty()) {
        throw EmptyHistoryError("time_decay_weights: empty offset list");
    }
    // Shifting by the minimum offset leaves the normalized weights unchanged
    // and keeps every exponent <= 0, so nothing can underflow to all-zero.
    const double min_dt = *std::min_element(delta_t_days.begin(), delta_t_days.end());
    std::vector<double> weights(delta_t_days.size());
    double sum = 0.0;
    for (size_t i = 0; i < delta_t_days.size(); ++i) {
        weights[i] = std::exp(-lambda * (delta_t_days[i] - min_dt));
        sum += weights[i];
    }
    for (double& w : weights) {
        w /= sum;
    }
    return weights;
}

ComposedQuery compose_query(const DiagnosticOutput& diagnosis, const EhrRecord& current,
                            std::vector<EhrRecord> history, const WeightingConfig& cfg) {
    cfg.validate();
    if (current.kind != RecordKind::current) {
        throw MissingCurrentError("compose_query: record marked historical passed as current");
    }
    const std::string diagnosis_text = diagnosis.rendered();
    const bool current_blank = is_blank(current.text);
    if (diagnosis_text.empty() && current_blank) {
        throw MissingCurrentError("compose_query: neither diagnosis nor current record text");
    }

    // Blank historical records carry no signal; they are excluded before
    // weighting so the remaining parts keep the full (1 - w0) mass.
    std::erase_if(history, [](const EhrRecord& r) { return is_blank(r.text); });
    for (const auto& r : history) {
        if (days_between(current.timestamp, r.timestamp) < 0) {
            throw SchemaError("historical record dated after the current record");
        }
    }
    std::stable_sort(history.begin(), history.end(), [](const EhrRecord& a, const EhrRecord& b) {
        return std::chrono::sys_days(a.timestamp) > std::chrono::sys_days(b.timestamp);
    });
    if (history.size() > cfg.history_window) {
        history.resize(cfg.history_window);
    }

    std::string part0_text = diagnosis_text;
    if (!current_blank) {
        part0_text = part0_text.empty() ? current.text : part0_text + "\n" + current.text;
    }

    ComposedQuery out;
    if (history.empty()) {
        if (cfg.mode == WeightingMode::fixed && cfg.fixed_weights.size() != 1) {
            throw WeightConfigMismatchError("fixed_weights has " +
                                            std::to_string(cfg.fixed_weights.size()) +
                                            " entries for a query with no history");
        }
        out.parts.push_back({PartRole::diagnosis_plus_current, part0_text, 1.0, 0});
        return out;
    }

    std::vector<double> delta_t;
    delta_t.reserve(history.size());
    for (const auto& r : history) {
        delta_t.push_back(static_cast<double>(days_between(current.timestamp, r.timestamp)));
    }

    double w0 = 0.0;
    std::vector<double> history_weights;
    if (cfg.mode == WeightingMode::fixed) {
        if (cfg.fixed_weights.size() != history.size() + 1) {
            throw WeightConfigMismatchError(
                "fixed_weights has " + std::to_string(cfg.fixed_weights.size()) +
                " entries for 1 current + " + std::to_string(history.size()) +
                " historical parts");
        }
        w0 = cfg.fixed_weights[0];
        history_weights.assign(cfg.fixed_weights.begin() + 1, cfg.fixed_weights.end());
    } else {
        w0 = cfg.current_weight;
        history_weights = time_decay_weights(delta_t, cfg.lambda);
        for (double& w : history_weights) {
            w *= 1.0 - w0;
        }
    }

    out.parts.push_back({PartRole::diagnosis_plus_current, part0_text, w0, 0});
    for (size_t i = 0; i < history.size(); ++i) {
        out.parts.push_back({PartRole::historical, history[i].text, history_weights[i],
                             static_cast<long>(delta_t[i])});
    }
    return out;
}

Vec embed_query(const ComposedQuery& query, const Embedder& e) {
    if (query.parts.empty()) {
        throw MissingCurrentError("embed_query: query has no parts");
    }
    if (query.parts.size() == 1) {
        return e.embed(query.parts[0].text);
    }
    std::vector<double> weights;
    std::vector<Vec> vectors;
    weights.reserve(query.parts.size());
    vectors.reserve(query.parts.size());
    for (const auto& part : query.parts) {
        weights.push_back(part.weight);
        vectors.push_back(e.embed(part.text));
    }
    return weighted_combine(weights, vectors);
}

// ---------------------------------------------------------------------------
// Case files
// ---------------------------------------------------------------------------

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) {
            if (key == a) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw SchemaError("unknown field '" + key + "' in " + where);
        }
    }
}

} // namespace

CaseInput case_from_json_text(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("bad case file: ") + e.what());
    }
    if (!j.is_object()) {
        throw SchemaError("case file root must be an object");
    }
    reject_unknown(j, {"diagnosis", "current", "history"}, "case");
    if (!j.contains("diagnosis") || !j["diagnosis"].is_array() || j["diagnosis"].empty()) {
        throw SchemaError("case requires a non-empty 'diagnosis' array");
    }
    if (!j.contains("current") || !j["current"].is_object()) {
        throw SchemaError("case requires a 'current' record object");
    }

    CaseInput out;
    try {
        for (const auto& entry : j["diagnosis"]) {
            reject_unknown(entry, {"icd", "label"}, "diagnosis entry");
            DiagnosticOutput::Entry e;
            e.icd_code = entry.at("icd").get<std::string>();
            e.label = entry.value("label", "");
            if (e.icd_code.empty()) {
                throw SchemaError("diagnosis entry has empty 'icd'");
            }
            out.diagnosis.entries.push_back(std::move(e));
        }

        const auto& cur = j["current"];
        reject_unknown(cur, {"date", "text"}, "current record");
        out.current.kind = RecordKind::current;
        out.current.timestamp = parse_date(cur.at("date").get<std::string>());
        out.current.text = cur.value("text", "");

        if (j.contains("history")) {
            if (!j["history"].is_array()) {
                throw SchemaError("'history' must be an array");
            }
            for (const auto& h : j["history"]) {
                reject_unknown(h, {"date", "diagnosis", "outpatient_notes", "discharge_summary"},
                               "history record");
                EhrRecord r;
                r.kind = RecordKind::historical;
                r.timestamp = parse_date(h.at("date").get<std::string>());
                std::string text;
                for (const char* key : {"diagnosis", "outpatient_notes", "discharge_summary"}) {
                    const std::string part = h.value(key, "");
                    if (part.empty()) {
                        continue;
                    }
                    if (!text.empty()) {
                        text += '\n';
                    }
                    text += part;
                }
                r.text = std::move(text);
                out.history.push_back(std::move(r));
            }
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("bad case file: ") + e.what());
    }
    return out;
}

CaseInput load_case_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read case file " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return case_from_json_text(buf.str());
}

} // namespace gar
