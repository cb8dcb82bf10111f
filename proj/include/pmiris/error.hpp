#pragma once

#include <stdexcept>
#include <string>

namespace pmiris {

// Base class for all toolkit errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define PMIRIS_DEFINE_ERROR(NAME)                                \
  struct NAME : Error {                                          \
    explicit NAME(const std::string& msg) : Error(#NAME ": " + msg) {} \
  }

PMIRIS_DEFINE_ERROR(FileNotFound);
PMIRIS_DEFINE_ERROR(UnsupportedFormat);
PMIRIS_DEFINE_ERROR(InvalidConfig);
PMIRIS_DEFINE_ERROR(InvalidParam);
PMIRIS_DEFINE_ERROR(NoCircleFound);
PMIRIS_DEFINE_ERROR(DimensionMismatch);
PMIRIS_DEFINE_ERROR(DegenerateCorners);
PMIRIS_DEFINE_ERROR(SegmentationOutOfBounds);
PMIRIS_DEFINE_ERROR(InsufficientOverlap);
PMIRIS_DEFINE_ERROR(InsufficientPairs);
PMIRIS_DEFINE_ERROR(InsufficientData);
PMIRIS_DEFINE_ERROR(EmptyInput);
PMIRIS_DEFINE_ERROR(EmptyDataset);
PMIRIS_DEFINE_ERROR(EmptyScores);
PMIRIS_DEFINE_ERROR(IndexOutOfRange);
PMIRIS_DEFINE_ERROR(ObjectiveFailure);
PMIRIS_DEFINE_ERROR(ParseError);

#undef PMIRIS_DEFINE_ERROR

}  // namespace pmiris
