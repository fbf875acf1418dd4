#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace orgseg {

enum class ErrorKind {
  // imaging
  MissingFile,
  CorruptRaster,
  InconsistentDimensions,
  WindowLargerThanImage,
  MisalignedMasks,
  NonSquareCrop,
  // augment
  FractionOutOfRange,
  OddDimensions,
  ImageTooSmall,
  // losses / evaluate
  DimensionMismatch,
  // model
  InvalidSpec,
  ShapeMismatch,
  MissingTensor,
  CorruptBundle,
  VersionMismatch,
  // splits
  EmptyDataset,
  BudgetTooLarge,
  TooFewItems,
  // train
  ConfigMismatch,
  // evaluate
  IncompleteRuns,
  // cli
  UnknownSubcommand,
  ConfigValidationError,
  Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// True for errors caused by bad user input (CLI exit code 1) rather than a
/// failure while running (exit code 2).
bool is_validation_error(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace orgseg
