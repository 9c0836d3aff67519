#pragma once

#include <stdexcept>
#include <string>

namespace decomind {

/// Root of every error raised by the library. Validation failures are not
/// errors; they are returned as ValidationReport values.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Missing paths, label-set coverage gaps, bad plug-in selection.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

class IngestionError : public Error {
public:
    using Error::Error;
};

/// Per-asset image processing failure (decode, mask mismatch, ...).
class ProcessingError : public Error {
public:
    ProcessingError(std::string asset_id, const std::string& what)
        : Error(asset_id.empty() ? what : asset_id + ": " + what), asset_id_(std::move(asset_id)) {}

    const std::string& asset_id() const noexcept { return asset_id_; }

private:
    std::string asset_id_;
};

/// Catalog archive could not be read back.
class FormatError : public Error {
public:
    using Error::Error;
};

class RankingError : public Error {
public:
    using Error::Error;
};

class RequestError : public Error {
public:
    using Error::Error;
};

class CompositionError : public Error {
public:
    using Error::Error;
};

class GenerationError : public Error {
public:
    GenerationError(const std::string& what, std::string retry_hint = {})
        : Error(what), retry_hint_(std::move(retry_hint)) {}

    const std::string& retry_hint() const noexcept { return retry_hint_; }

private:
    std::string retry_hint_;
};

/// The backend refused the requested parameters (e.g. image size).
class ParameterError : public Error {
public:
    using Error::Error;
};

class EvaluationError : public Error {
public:
    EvaluationError(std::string classifier_id, const std::string& what)
        : Error(classifier_id + ": " + what), classifier_id_(std::move(classifier_id)) {}

    const std::string& classifier_id() const noexcept { return classifier_id_; }

private:
    std::string classifier_id_;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class NotReadyError : public Error {
public:
    using Error::Error;
};

}  // namespace decomind
