#pragma once
// Typed error hierarchy shared across the engine. Every failure the
// pipelines can recover from is a distinct exception type so callers can
// branch on it instead of string-matching messages.

#include <stdexcept>
#include <string>

namespace hopqa {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- core-model -------------------------------------------------------

struct MissingAntecedent : Error {
    int index;
    explicit MissingAntecedent(int k)
        : Error("no history entry for placeholder #" + std::to_string(k)), index(k) {}
};

struct ForwardReference : Error {
    int index;
    explicit ForwardReference(int k)
        : Error("placeholder #" + std::to_string(k) + " references a later step"), index(k) {}
};

struct InvariantViolation : Error {
    using Error::Error;
};

// --- llm-gateway ------------------------------------------------------

struct MissingBinding : Error {
    std::string label;
    explicit MissingBinding(const std::string& l)
        : Error("no binding for input field \"" + l + "\""), label(l) {}
};

// Base for "the model ignored the output grammar" failures; live backends
// get one retry with a format reminder before these surface.
struct FormatError : Error {
    using Error::Error;
};

struct MissingField : FormatError {
    std::string label;
    explicit MissingField(const std::string& l)
        : FormatError("output field \"" + l + "\" not found"), label(l) {}
};

struct DuplicateField : FormatError {
    std::string label;
    explicit DuplicateField(const std::string& l)
        : FormatError("output field \"" + l + "\" appears more than once"), label(l) {}
};

struct BackendTimeout : Error {
    explicit BackendTimeout(const std::string& detail)
        : Error("backend timeout: " + detail) {}
};

struct BackendRejected : Error {
    int status;
    explicit BackendRejected(int s, const std::string& detail = "")
        : Error("backend rejected request (status " + std::to_string(s) + ") " + detail),
          status(s) {}
};

struct ScriptExhausted : Error {
    ScriptExhausted() : Error("scripted backend has no matching queued response left") {}
};

struct TemplateError : Error {
    using Error::Error;
};

// --- reasoning-modules ------------------------------------------------

struct MalformedPlan : FormatError {
    using FormatError::FormatError;
};

struct UnparseableBoolean : FormatError {
    explicit UnparseableBoolean(const std::string& got)
        : FormatError("expected true/false, got \"" + got + "\"") {}
};

struct UnparseableRanking : FormatError {
    explicit UnparseableRanking(const std::string& got)
        : FormatError("no valid passage identifiers in ranking output: \"" + got + "\"") {}
};

struct PreconditionError : Error {
    using Error::Error;
};

// --- retrieval --------------------------------------------------------

struct MalformedLine : Error {
    size_t lineno;
    MalformedLine(size_t n, const std::string& why)
        : Error("corpus line " + std::to_string(n) + ": " + why), lineno(n) {}
};

struct DuplicateDocId : Error {
    std::string doc_id;
    explicit DuplicateDocId(const std::string& id)
        : Error("duplicate doc_id \"" + id + "\""), doc_id(id) {}
};

struct EmptyIndex : Error {
    EmptyIndex() : Error("retrieval index is empty or not built") {}
};

struct RemoteRetrieverError : Error {
    int status;
    explicit RemoteRetrieverError(int s, const std::string& detail = "")
        : Error("remote retriever failed (status " + std::to_string(s) + ") " + detail),
          status(s) {}
};

// --- evaluation -------------------------------------------------------

struct EmptyGold : Error {
    EmptyGold() : Error("gold answer list is empty (or normalizes to empty)") {}
};

struct MissingJudgment : Error {
    std::string question_id;
    explicit MissingJudgment(const std::string& id)
        : Error("no judgment for question \"" + id + "\""), question_id(id) {}
};

// --- config / cli -----------------------------------------------------

struct ConfigError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

}  // namespace hopqa
