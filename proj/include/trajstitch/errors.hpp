#pragma once

#include <stdexcept>
#include <string>

namespace trajstitch {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user input: malformed config, unknown key, invalid maze file.
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem problems: missing file, short read, version mismatch.
struct IoError : Error {
    using Error::Error;
};

// A state that violates an environment precondition (e.g. inside a wall).
struct InvalidStateError : Error {
    using Error::Error;
};

// An input artifact whose bytes no longer match the manifest entry.
struct StaleArtifactError : Error {
    using Error::Error;
};

}  // namespace trajstitch
