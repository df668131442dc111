#pragma once

#include <stdexcept>
#include <string>

namespace flotapinn {

// Base class for everything this library throws on purpose.  The CLI maps
// UsageError to exit code 2 and every other Error to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller misused an interface (wrong tape, empty batch, bad CLI flags).
class UsageError : public Error {
public:
    using Error::Error;
};

// A configuration file or preset is internally inconsistent.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Input data violates a precondition (too few values, non-finite entries).
class DataError : public Error {
public:
    using Error::Error;
};

// A file does not match the expected on-disk format.
class FormatError : public Error {
public:
    using Error::Error;
};

// Autodiff domain violation, e.g. division by a zero-valued node.
class TapeError : public Error {
public:
    using Error::Error;
};

// Numerical failure during training (non-finite loss or gradient).
class TrainError : public Error {
public:
    using Error::Error;
};

// Numerical failure during simulation (state blow-up).
class SimError : public Error {
public:
    using Error::Error;
};

// Evaluation cannot produce a defined metric (e.g. every sample excluded).
class EvalError : public Error {
public:
    using Error::Error;
};

// Degenerate scaling range (max == min).
class ScalingError : public Error {
public:
    using Error::Error;
};

} // namespace flotapinn
