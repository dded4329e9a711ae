#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rex {

// Every failure the library reports carries one of these kinds so batch
// drivers can tally skips per class.
enum class ErrorKind {
  ParseError,
  CycleError,
  ArityError,
  UnmappedOperation,
  KindMismatch,
  NonSingletonSelection,
  MissingAttribute,
  EmptySelection,
  UnorderedValue,
  TiedComparison,
  AlignmentBelowThreshold,
  TemplateSlotError,
  RegionIndexOutOfRange,
  DimMismatch,
  NonFinite,
  EmptyEvalSet,
  FractionOutOfRange,
  MissingScene,
  IoError,
  ConfigError,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string node_id = {});

  ErrorKind kind() const { return kind_; }
  // Program node the failure is attributed to; empty when not node-specific.
  const std::string& node_id() const { return node_id_; }

  // Copy of this error attributed to `node_id` (keeps an existing one).
  Error at_node(const std::string& node_id) const;

 private:
  ErrorKind kind_;
  std::string node_id_;
  std::string message_;
};

}  // namespace rex
