#pragma once

#include <stdexcept>
#include <string>

namespace ranktrace {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

/// rank_bump on a matrix that already has full numerical rank.
class FullRankError : public Error {
public:
    using Error::Error;
};

/// The requested bump would not sit below the smallest retained singular value.
class PerturbationTooLarge : public Error {
public:
    using Error::Error;
};

/// Zero matrix where a direction is required (e.g. cosine).
class DegenerateInput : public Error {
public:
    using Error::Error;
};

class UnsupportedActivation : public Error {
public:
    using Error::Error;
};

class UnsupportedDepth : public Error {
public:
    using Error::Error;
};

/// A data/architecture assumption needed for optimality results does not hold.
class AssumptionViolated : public Error {
public:
    using Error::Error;
};

class GenerationFailed : public Error {
public:
    using Error::Error;
};

} // namespace ranktrace
