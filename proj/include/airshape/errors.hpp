#ifndef AIRSHAPE_ERRORS_HPP
#define AIRSHAPE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace airshape {

// Error categories used across the pipeline. All derive from std::runtime_error
// so callers can catch broadly at the CLI boundary and precisely in tests.

struct DegenerateGeometry : std::runtime_error {
    explicit DegenerateGeometry(const std::string& msg) : std::runtime_error("DegenerateGeometry: " + msg) {}
};

struct EmptyResult : std::runtime_error {
    explicit EmptyResult(const std::string& msg) : std::runtime_error("EmptyResult: " + msg) {}
};

struct RasterizationOverflow : std::runtime_error {
    explicit RasterizationOverflow(const std::string& msg) : std::runtime_error("RasterizationOverflow: " + msg) {}
};

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& msg) : std::runtime_error("ShapeMismatch: " + msg) {}
};

struct NonFinite : std::runtime_error {
    explicit NonFinite(const std::string& msg) : std::runtime_error("NonFinite: " + msg) {}
};

struct InsufficientData : std::runtime_error {
    explicit InsufficientData(const std::string& msg) : std::runtime_error("InsufficientData: " + msg) {}
};

struct EmptyReference : std::runtime_error {
    explicit EmptyReference(const std::string& msg) : std::runtime_error("EmptyReference: " + msg) {}
};

struct SizeMismatch : std::runtime_error {
    explicit SizeMismatch(const std::string& msg) : std::runtime_error("SizeMismatch: " + msg) {}
};

struct DegenerateData : std::runtime_error {
    explicit DegenerateData(const std::string& msg) : std::runtime_error("DegenerateData: " + msg) {}
};

struct InvalidK : std::runtime_error {
    explicit InvalidK(const std::string& msg) : std::runtime_error("InvalidK: " + msg) {}
};

struct EmptyGraph : std::runtime_error {
    explicit EmptyGraph(const std::string& msg) : std::runtime_error("EmptyGraph: " + msg) {}
};

struct MissingArtifact : std::runtime_error {
    explicit MissingArtifact(const std::string& msg) : std::runtime_error("MissingArtifact: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("IoError: " + msg) {}
};

} // namespace airshape

#endif
