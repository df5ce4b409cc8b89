#pragma once

#include <stdexcept>
#include <string>

namespace tppt {

// Error categories map onto process exit codes in the CLI:
// validation/parse/config -> 1, runtime -> 2.
enum class ErrorKind {
    Validation,
    Parse,
    Config,
    Runtime,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error validation_error(std::string msg) { return Error(ErrorKind::Validation, std::move(msg)); }
inline Error parse_error(std::string msg) { return Error(ErrorKind::Parse, std::move(msg)); }
inline Error config_error(std::string msg) { return Error(ErrorKind::Config, std::move(msg)); }
inline Error runtime_error(std::string msg) { return Error(ErrorKind::Runtime, std::move(msg)); }

} // namespace tppt
