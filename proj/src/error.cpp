#include "bbf/error.hpp"

namespace bbf {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::MissingFitness: return "MissingFitness";
    case ErrorKind::StaleCandidates: return "StaleCandidates";
    case ErrorKind::InvalidScheme: return "InvalidScheme";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::InvalidConfidence: return "InvalidConfidence";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyOthers: return "EmptyOthers";
    case ErrorKind::EmptySplit: return "EmptySplit";
    case ErrorKind::InvalidK: return "InvalidK";
    case ErrorKind::UnsupportedOracle: return "UnsupportedOracle";
    case ErrorKind::OracleMismatch: return "OracleMismatch";
    case ErrorKind::Transport: return "Transport";
    case ErrorKind::ProtocolMismatch: return "ProtocolMismatch";
    case ErrorKind::ServerError: return "ServerError";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace bbf
