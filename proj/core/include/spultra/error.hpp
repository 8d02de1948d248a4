#pragma once

#include <stdexcept>
#include <string>

namespace spultra {

/// Inconsistent shapes, geometry or configuration values.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// An argument violates a documented precondition (negative weight, empty mask, ...).
class ArgumentError : public std::invalid_argument {
public:
    explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

/// A solver produced a non-finite quantity.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// A stage input (sinogram, transforms, truth image, ...) does not exist on disk.
class MissingArtifactError : public std::runtime_error {
public:
    explicit MissingArtifactError(const std::string& what) : std::runtime_error(what) {}
};

/// A re-run produced artifacts whose checksums differ from the recorded manifest.
class ManifestMismatchError : public std::runtime_error {
public:
    explicit ManifestMismatchError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace spultra
