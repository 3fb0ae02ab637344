#pragma once

#include <stdexcept>
#include <string>

namespace searchrag {

/// Network-level failure (connect, timeout, 5xx). Retriable.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The remote endpoint answered, but the payload does not match the
/// expected shape. Never retried.
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The backend cannot satisfy a required feature (e.g. logprobs requested
/// but not available).
class CapabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The search provider reported an exhausted quota. Aborts the run.
class QuotaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A logprob value that cannot come from a probability (positive beyond
/// tolerance, or mass summing past 1).
class InvalidLogprob : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The same token appeared twice in one top-k logprob list.
class DuplicateToken : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Corpus file missing or malformed.
class CorpusLoadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dataset file rejected; carries the 1-based offending line.
class DatasetFormatError : public std::runtime_error {
public:
    DatasetFormatError(int line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

/// Mock script failed validation (no fallthrough rule, bad distribution, ...).
class MockScriptError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Prompt template asset missing a required placeholder or structural part.
class TemplateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Summary requested against a baseline that does not exist or has zero
/// accuracy (relative improvement undefined).
class BaselineMissing : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace searchrag
