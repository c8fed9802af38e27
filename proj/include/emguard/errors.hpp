#pragma once

#include <stdexcept>
#include <string>

namespace emguard {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define EMGUARD_DEFINE_ERROR(Name)              \
    class Name : public Error {                 \
    public:                                     \
        explicit Name(const std::string& what)  \
            : Error(#Name ": " + what) {}       \
    }

// signal model
EMGUARD_DEFINE_ERROR(InvalidProgram);
EMGUARD_DEFINE_ERROR(InvalidParameter);
EMGUARD_DEFINE_ERROR(IndexError);
EMGUARD_DEFINE_ERROR(InsufficientBaseline);
EMGUARD_DEFINE_ERROR(FormatError);
EMGUARD_DEFINE_ERROR(IoError);

// noise
EMGUARD_DEFINE_ERROR(InvalidInput);
EMGUARD_DEFINE_ERROR(ZeroSignalError);

// denoise / lof / detector / eval
EMGUARD_DEFINE_ERROR(NumericalError);
EMGUARD_DEFINE_ERROR(InvalidK);
EMGUARD_DEFINE_ERROR(DimensionError);
EMGUARD_DEFINE_ERROR(ContaminatedBaseline);
EMGUARD_DEFINE_ERROR(EvaluationError);
EMGUARD_DEFINE_ERROR(DataError);

#undef EMGUARD_DEFINE_ERROR

} // namespace emguard
