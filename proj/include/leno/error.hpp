#pragma once

#include <stdexcept>
#include <string>

namespace leno {

// Failure categories map one-to-one onto CLI exit codes.
enum class ErrorKind { input, stage_order, numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    int exit_code() const noexcept {
        switch (kind_) {
            case ErrorKind::input: return 2;
            case ErrorKind::stage_order: return 3;
            case ErrorKind::numerical: return 4;
        }
        return 1;
    }

private:
    ErrorKind kind_;
};

inline Error input_error(const std::string& msg) { return {ErrorKind::input, msg}; }
inline Error stage_error(const std::string& msg) { return {ErrorKind::stage_order, msg}; }
inline Error numerical_error(const std::string& msg) { return {ErrorKind::numerical, msg}; }

} // namespace leno
