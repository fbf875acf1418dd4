#include "orgseg/error.hpp"

namespace orgseg {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::CorruptRaster: return "CorruptRaster";
    case ErrorKind::InconsistentDimensions: return "InconsistentDimensions";
    case ErrorKind::WindowLargerThanImage: return "WindowLargerThanImage";
    case ErrorKind::MisalignedMasks: return "MisalignedMasks";
    case ErrorKind::NonSquareCrop: return "NonSquareCrop";
    case ErrorKind::FractionOutOfRange: return "FractionOutOfRange";
    case ErrorKind::OddDimensions: return "OddDimensions";
    case ErrorKind::ImageTooSmall: return "ImageTooSmall";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::MissingTensor: return "MissingTensor";
    case ErrorKind::CorruptBundle: return "CorruptBundle";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::BudgetTooLarge: return "BudgetTooLarge";
    case ErrorKind::TooFewItems: return "TooFewItems";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::IncompleteRuns: return "IncompleteRuns";
    case ErrorKind::UnknownSubcommand: return "UnknownSubcommand";
    case ErrorKind::ConfigValidationError: return "ConfigValidationError";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

bool is_validation_error(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::WindowLargerThanImage:
    case ErrorKind::FractionOutOfRange:
    case ErrorKind::InvalidSpec:
    case ErrorKind::BudgetTooLarge:
    case ErrorKind::TooFewItems:
    case ErrorKind::ConfigMismatch:
    case ErrorKind::UnknownSubcommand:
    case ErrorKind::ConfigValidationError:
      return true;
    default:
      return false;
  }
}

}  // namespace orgseg
