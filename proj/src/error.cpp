#include "geoprog/error.hpp"

namespace geoprog {

std::string_view errc_name(Errc code) {
    switch (code) {
        case Errc::DuplicateSymbol: return "DuplicateSymbol";
        case Errc::EmptyTypeSet: return "EmptyTypeSet";
        case Errc::InvalidArity: return "InvalidArity";
        case Errc::InvalidRegistry: return "InvalidRegistry";
        case Errc::UnknownProblemType: return "UnknownProblemType";
        case Errc::UnknownSymbol: return "UnknownSymbol";
        case Errc::OperatorInArgPosition: return "OperatorInArgPosition";
        case Errc::CacheTokenForwardReference: return "CacheTokenForwardReference";
        case Errc::Truncated: return "Truncated";
        case Errc::InvalidProgram: return "InvalidProgram";
        case Errc::DivisionByZero: return "DivisionByZero";
        case Errc::UnboundNumber: return "UnboundNumber";
        case Errc::NonExecutableOperator: return "NonExecutableOperator";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::AllMasked: return "AllMasked";
        case Errc::NonFiniteLoss: return "NonFiniteLoss";
        case Errc::SpanOutOfRange: return "SpanOutOfRange";
        case Errc::PatchDimensionMismatch: return "PatchDimensionMismatch";
        case Errc::CacheIndexOutOfRange: return "CacheIndexOutOfRange";
        case Errc::GoldSymbolMasked: return "GoldSymbolMasked";
        case Errc::SpaceTooLarge: return "SpaceTooLarge";
        case Errc::MalformedRecord: return "MalformedRecord";
        case Errc::UnresolvableSymbol: return "UnresolvableSymbol";
        case Errc::VersionMismatch: return "VersionMismatch";
        case Errc::CorruptTensor: return "CorruptTensor";
        case Errc::InvalidConfig: return "InvalidConfig";
        case Errc::Io: return "Io";
    }
    return "Unknown";
}

bool Error::is_data_error() const noexcept {
    switch (code_) {
        case Errc::DuplicateSymbol:
        case Errc::EmptyTypeSet:
        case Errc::InvalidArity:
        case Errc::InvalidRegistry:
        case Errc::UnknownProblemType:
        case Errc::UnknownSymbol:
        case Errc::OperatorInArgPosition:
        case Errc::CacheTokenForwardReference:
        case Errc::Truncated:
        case Errc::InvalidProgram:
        case Errc::PatchDimensionMismatch:
        case Errc::MalformedRecord:
        case Errc::UnresolvableSymbol:
        case Errc::VersionMismatch:
        case Errc::CorruptTensor:
        case Errc::Io:
            return true;
        default:
            return false;
    }
}

}  // namespace geoprog
