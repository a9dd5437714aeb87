#pragma once

#include <stdexcept>
#include <string>

namespace steelrank {

enum class ErrorKind {
    parameter,  // argument outside its documented domain
    data,       // malformed or unusable input data
    numeric,    // a numerical routine failed to reach its tolerance
    budget,     // exact enumeration would exceed the configured budget
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::parameter: return "parameter";
        case ErrorKind::data: return "data";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::budget: return "budget";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace steelrank
