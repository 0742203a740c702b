#pragma once

#include <stdexcept>
#include <string>

namespace gar {

/// Base class for every error raised by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// -- knowledge base / persistence ----------------------------------------

struct DuplicateIdError : Error {
    using Error::Error;
};
struct DimensionMismatchError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct SchemaError : Error {
    using Error::Error;
};
struct FingerprintMismatchError : Error {
    using Error::Error;
};

// -- embedding / vector math ---------------------------------------------

struct EmptyInputError : Error {
    using Error::Error;
};
struct EmbedderFailure : Error {
    using Error::Error;
};
// Remote-embedder failures are embedder failures; callers that only care
// about embed()'s contract can catch EmbedderFailure alone.
struct TransportError : EmbedderFailure {
    using EmbedderFailure::EmbedderFailure;
};
struct ProtocolError : EmbedderFailure {
    using EmbedderFailure::EmbedderFailure;
};
struct DimensionDriftError : EmbedderFailure {
    using EmbedderFailure::EmbedderFailure;
};
struct ZeroVectorError : Error {
    using Error::Error;
};
struct LengthMismatchError : Error {
    using Error::Error;
};
struct DegenerateCombinationError : Error {
    using Error::Error;
};

// -- ingestion -------------------------------------------------------------

/// Markup parse failure; `line` is 1-based within the source document.
struct ParseError : Error {
    ParseError(const std::string& message, int line_number)
        : Error(message + " (line " + std::to_string(line_number) + ")"), line(line_number) {}
    int line;
};
struct EmptyReferenceError : Error {
    using Error::Error;
};

// -- query composition -----------------------------------------------------

struct EmptyHistoryError : Error {
    using Error::Error;
};
struct MissingCurrentError : Error {
    using Error::Error;
};
struct WeightConfigMismatchError : Error {
    using Error::Error;
};

// -- retrieval / evaluation ------------------------------------------------

struct EmptyKnowledgeBaseError : Error {
    using Error::Error;
};
struct NotEmbeddedError : Error {
    using Error::Error;
};
struct ScorerFailure : Error {
    using Error::Error;
};

} // namespace gar
