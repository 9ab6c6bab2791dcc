#pragma once

#include <stdexcept>
#include <string>

namespace navkit {

enum class Errc {
    ParseError,          // malformed action text / selector syntax
    UnsupportedSelector, // selector uses features outside the grammar
    InvalidSelector,     // selector matched nothing
    AmbiguousSelector,   // selector matched more than one element
    NotFound,            // lookup miss (node id, chunk target, ...)
    NoValidAction,       // every sampled completion was unusable
    LoadError,           // bad input file (tokenizer json, workflow jsonl, ...)
    TransportError,      // endpoint unreachable after retries
    ApiError,            // endpoint returned a non-success status
    BadConfig,           // invalid configuration value
    EmptyInput,          // operation needs nonempty input
};

const char* errc_name(Errc e);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

inline const char* errc_name(Errc e) {
    switch (e) {
    case Errc::ParseError: return "parse error";
    case Errc::UnsupportedSelector: return "unsupported selector";
    case Errc::InvalidSelector: return "invalid selector";
    case Errc::AmbiguousSelector: return "ambiguous selector";
    case Errc::NotFound: return "not found";
    case Errc::NoValidAction: return "no valid action";
    case Errc::LoadError: return "load error";
    case Errc::TransportError: return "transport error";
    case Errc::ApiError: return "api error";
    case Errc::BadConfig: return "bad config";
    case Errc::EmptyInput: return "empty input";
    }
    return "error";
}

} // namespace navkit
