#pragma once

#include <stdexcept>
#include <string>

namespace prefjudge {

// Caller passed a value outside an operation's contract.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Run configuration failed validation; nothing has been written yet.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An endpoint stayed unreachable (or kept failing) after all retries.
class TransportError : public std::runtime_error {
public:
    TransportError(const std::string& what, int status = 0)
        : std::runtime_error(what), status_(status) {}

    int status() const noexcept { return status_; }

    // 429, 5xx and connection-level failures (status 0) are worth retrying.
    bool transient() const noexcept { return status_ == 0 || status_ == 429 || status_ >= 500; }

private:
    int status_;
};

// A persisted file is malformed or carries an unsupported schema version.
class DataIntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Answer matching could not reach a yes/no decision.
class VerificationFailed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int config = 2;
inline constexpr int transport = 3;
inline constexpr int data_integrity = 4;
}  // namespace exit_code

}  // namespace prefjudge
