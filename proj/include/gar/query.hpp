#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "gar/embedder.hpp"

namespace gar {

using Date = std::chrono::year_month_day;

/// Parse "YYYY-MM-DD"; throws SchemaError on malformed or invalid dates.
Date parse_date(const std::string& text);
std::string format_date(const Date& date);

/// Whole days from `from` back to `to` (non-negative when `to` <= `from`).
long days_between(const Date& from, const Date& to);

/// Diagnoses produced upstream; each entry is an ICD code plus a label.
struct DiagnosticOutput {
    struct Entry {
        std::string icd_code;
        std::string label;
    };
    std::vector<Entry> entries;

    /// "code label" pairs joined by "; ".
    std::string rendered() const;
};

enum class RecordKind { current, historical };

/// One patient record. Historical records are pre-simplified to diagnosis,
/// outpatient notes, and discharge summary joined into `text`.
struct EhrRecord {
    RecordKind kind = RecordKind::current;
    Date timestamp{};
    std::string text;
};

enum class WeightingMode { time_decay, fixed };

struct WeightingConfig {
    WeightingMode mode = WeightingMode::time_decay;
    double lambda = 0.1;         // decay rate per day (time_decay mode)
    double current_weight = 0.6; // mass of the current record (time_decay mode)
    std::vector<double> fixed_weights; // fixed mode: [w0, w-1, w-2, ...], sums to 1
    size_t history_window = 2;

    /// Throws WeightConfigMismatchError on out-of-range parameters.
    void validate() const;
};

enum class PartRole { diagnosis_plus_current, historical };

/// The weighted multi-part query. Part 0 always carries the diagnosis plus
/// the current record; weights sum to 1 +- 1e-9.
struct ComposedQuery {
    struct Part {
        PartRole role = PartRole::diagnosis_plus_current;
        std::string text;
        double weight = 0.0;
        long delta_t_days = 0;
    };
    std::vector<Part> parts;
};

/// Normalized exponential time-decay weights over day offsets:
/// w_i = exp(-lambda * dt_i) / sum_j exp(-lambda * dt_j). The minimum offset
/// is subtracted before exponentiating, so underflow cannot occur.
/// Throws EmptyHistoryError on an empty list.
std::vector<double> time_decay_weights(const std::vector<double>& delta_t_days, double lambda);

/// Build the enriched query. Historical records with blank text are dropped,
/// the rest are ordered most-recent-first and truncated to
/// cfg.history_window; with no usable history the single current part gets
/// weight 1. Throws MissingCurrentError when both the diagnosis and the
/// current text are empty, WeightConfigMismatchError when fixed_weights does
/// not cover 1 + len(history) parts.
ComposedQuery compose_query(const DiagnosticOutput& diagnosis, const EhrRecord& current,
                            std::vector<EhrRecord> history, const WeightingConfig& cfg);

/// q = weighted_combine(part weights, embed(part texts)); unit-norm.
Vec embed_query(const ComposedQuery& query, const Embedder& e);

/// One evaluation/query case: diagnosis, current record, history.
struct CaseInput {
    DiagnosticOutput diagnosis;
    EhrRecord current;
    std::vector<EhrRecord> history;
};

/// Parse the case-file JSON schema:
/// {"diagnosis": [{"icd", "label"}...], "current": {"date", "text"},
///  "history": [{"date", "diagnosis", "outpatient_notes", "discharge_summary"}...]}
/// Throws SchemaError.
CaseInput case_from_json_text(const std::string& json_text);
CaseInput load_case_file(const std::string& path); // adds IoError

} // namespace gar
