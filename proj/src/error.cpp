#include "deta/error.hpp"

namespace deta {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::BoxOutOfBounds: return "BoxOutOfBounds";
    case ErrorCode::SideTooLarge: return "SideTooLarge";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::PoolExhausted: return "PoolExhausted";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::TooFewClasses: return "TooFewClasses";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::MissingPrevState: return "MissingPrevState";
    case ErrorCode::ZeroEmbedding: return "ZeroEmbedding";
    case ErrorCode::DegeneratePrototype: return "DegeneratePrototype";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ClassMismatch: return "ClassMismatch";
    case ErrorCode::EmptyBankClass: return "EmptyBankClass";
    case ErrorCode::EmptyList: return "EmptyList";
    case ErrorCode::RankSumInvalid: return "RankSumInvalid";
  }
  return "Unknown";
}

}  // namespace deta
