#pragma once

// Error types shared by every module. Each carries the data named in its
// message so callers can react without parsing text.

#include <cstddef>
#include <stdexcept>
#include <string>

namespace factens {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PreconditionError : Error {
    using Error::Error;
};

struct IoError : Error {
    std::string path;
    IoError(std::string path_, const std::string& what)
        : Error("io error: " + path_ + ": " + what), path(std::move(path_)) {}
};

struct SchemaError : Error {
    std::size_t row;
    std::string field;
    SchemaError(std::size_t row_, std::string field_, const std::string& detail = {})
        : Error("schema error at row " + std::to_string(row_) + ", field '" + field_ + "'" +
                (detail.empty() ? std::string{} : ": " + detail)),
          row(row_), field(std::move(field_)) {}
};

struct EmptySummary : Error {
    EmptySummary() : Error("sentence-annotated summary has no sentences") {}
};

struct InsufficientClassCount : Error {
    int label;
    std::size_t have, need;
    InsufficientClassCount(int label_, std::size_t have_, std::size_t need_)
        : Error("class " + std::to_string(label_) + " has " + std::to_string(have_) +
                " examples, need " + std::to_string(need_)),
          label(label_), have(have_), need(need_) {}
};

struct UnknownDataset : Error {
    explicit UnknownDataset(const std::string& name) : Error("unknown dataset: " + name) {}
};

struct TemplateError : Error {
    using Error::Error;
};

struct BackendError : Error {
    using Error::Error;
};

// Retryable failure (rate limit, 5xx, dropped connection).
struct TransientBackendError : BackendError {
    using BackendError::BackendError;
};

struct CacheCorruption : Error {
    using Error::Error;
};

struct DuplicateVerdict : Error {
    std::string example_id, prompt_id;
    DuplicateVerdict(std::string ex, std::string pr)
        : Error("duplicate verdict for example '" + ex + "', prompt '" + pr + "'"),
          example_id(std::move(ex)), prompt_id(std::move(pr)) {}
};

struct AllAbstainColumn : Error {
    std::string prompt_id;
    explicit AllAbstainColumn(std::string p)
        : Error("every entry of column '" + p + "' is Abstain"), prompt_id(std::move(p)) {}
};

struct UnknownPrompt : Error {
    std::string prompt_id;
    explicit UnknownPrompt(std::string p) : Error("unknown prompt id: " + p), prompt_id(std::move(p)) {}
};

struct DegenerateTrainingSet : Error {
    DegenerateTrainingSet() : Error("training labels contain a single class") {}
};

struct ColumnMismatch : Error {
    using Error::Error;
};

struct DegenerateLabels : Error {
    DegenerateLabels() : Error("calibration labels contain a single class") {}
};

struct SingleClassGold : Error {
    SingleClassGold() : Error("gold labels contain a single class") {}
};

struct SizeExceedsColumns : Error {
    SizeExceedsColumns(std::size_t size, std::size_t cols)
        : Error("requested subset size " + std::to_string(size) + " exceeds " +
                std::to_string(cols) + " columns") {}
};

struct MissingTrainRows : Error {
    explicit MissingTrainRows(const std::string& test)
        : Error("no usable non-test rows when holding out '" + test + "'") {}
};

struct ConfigError : Error {
    using Error::Error;
};

// Raised when a held-out example reaches a fitting stage.
struct TaintViolation : Error {
    using Error::Error;
};

}  // namespace factens
