#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geoprog {

enum class Errc {
    DuplicateSymbol,
    EmptyTypeSet,
    InvalidArity,
    InvalidRegistry,
    UnknownProblemType,
    UnknownSymbol,
    OperatorInArgPosition,
    CacheTokenForwardReference,
    Truncated,
    InvalidProgram,
    DivisionByZero,
    UnboundNumber,
    NonExecutableOperator,
    ShapeMismatch,
    AllMasked,
    NonFiniteLoss,
    SpanOutOfRange,
    PatchDimensionMismatch,
    CacheIndexOutOfRange,
    GoldSymbolMasked,
    SpaceTooLarge,
    MalformedRecord,
    UnresolvableSymbol,
    VersionMismatch,
    CorruptTensor,
    InvalidConfig,
    Io,
};

std::string_view errc_name(Errc code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
   public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

    // Errors caused by malformed input files rather than by the program itself.
    bool is_data_error() const noexcept;

   private:
    Errc code_;
};

}  // namespace geoprog
