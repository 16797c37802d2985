#pragma once

#include <stdexcept>
#include <string>

namespace gcam {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes disagree. `axis()` names the offending axis.
class DimensionError : public Error {
public:
    DimensionError(const std::string& axis, const std::string& what)
        : Error(what + " (axis: " + axis + ")"), axis_(axis) {}
    const std::string& axis() const noexcept { return axis_; }

private:
    std::string axis_;
};

class GraphError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class SurgeryError : public Error {
public:
    using Error::Error;
};

class UnsupportedArchitectureError : public SurgeryError {
public:
    using SurgeryError::SurgeryError;
};

class TrainingError : public Error {
public:
    TrainingError(int epoch, const std::string& what)
        : Error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

}  // namespace gcam
