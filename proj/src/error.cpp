#include "rex/error.hpp"

namespace rex {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::CycleError: return "CycleError";
    case ErrorKind::ArityError: return "ArityError";
    case ErrorKind::UnmappedOperation: return "UnmappedOperation";
    case ErrorKind::KindMismatch: return "KindMismatch";
    case ErrorKind::NonSingletonSelection: return "NonSingletonSelection";
    case ErrorKind::MissingAttribute: return "MissingAttribute";
    case ErrorKind::EmptySelection: return "EmptySelection";
    case ErrorKind::UnorderedValue: return "UnorderedValue";
    case ErrorKind::TiedComparison: return "TiedComparison";
    case ErrorKind::AlignmentBelowThreshold: return "AlignmentBelowThreshold";
    case ErrorKind::TemplateSlotError: return "TemplateSlotError";
    case ErrorKind::RegionIndexOutOfRange: return "RegionIndexOutOfRange";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::EmptyEvalSet: return "EmptyEvalSet";
    case ErrorKind::FractionOutOfRange: return "FractionOutOfRange";
    case ErrorKind::MissingScene: return "MissingScene";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

namespace {

std::string compose(ErrorKind kind, const std::string& message,
                    const std::string& node_id) {
  std::string out(to_string(kind));
  if (!node_id.empty()) out += " at node '" + node_id + "'";
  out += ": " + message;
  return out;
}

}  // namespace

Error::Error(ErrorKind kind, const std::string& message, std::string node_id)
    : std::runtime_error(compose(kind, message, node_id)),
      kind_(kind),
      node_id_(std::move(node_id)),
      message_(message) {}

Error Error::at_node(const std::string& node_id) const {
  if (!node_id_.empty()) return *this;
  return Error(kind_, message_, node_id);
}

}  // namespace rex
