// SPDX-License-Identifier: Apache-2.0
/**
 * @file   errors.hpp
 * @brief  Exception hierarchy shared by every gradekit module.
 *
 * Two families exist. DataError covers malformed or inconsistent inputs
 * (the CLI reports these with exit code 2). NumericalError covers
 * failures of the numerics themselves, such as divergence or degenerate
 * statistics (exit code 3).
 */
#pragma once

#include <stdexcept>
#include <string>

namespace gradekit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

#define GRADEKIT_DEFINE_ERROR(Name, Base) \
  class Name : public Base {              \
   public:                                \
    using Base::Base;                     \
  };

GRADEKIT_DEFINE_ERROR(MissingPart, DataError)
GRADEKIT_DEFINE_ERROR(InvalidScore, DataError)
GRADEKIT_DEFINE_ERROR(ShapeError, DataError)
GRADEKIT_DEFINE_ERROR(EmptySequence, DataError)
GRADEKIT_DEFINE_ERROR(EmptyDataset, DataError)
GRADEKIT_DEFINE_ERROR(CacheError, DataError)
GRADEKIT_DEFINE_ERROR(ArityError, DataError)
GRADEKIT_DEFINE_ERROR(MissingColumn, DataError)
GRADEKIT_DEFINE_ERROR(DuplicatePrediction, DataError)
GRADEKIT_DEFINE_ERROR(EmptyJoin, DataError)
GRADEKIT_DEFINE_ERROR(UnderdeterminedError, DataError)

GRADEKIT_DEFINE_ERROR(DivergedError, NumericalError)
GRADEKIT_DEFINE_ERROR(DegenerateInput, NumericalError)

#undef GRADEKIT_DEFINE_ERROR

/// Malformed input record. Carries the 1-based line number when known
/// (0 otherwise).
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : DataError(line == 0 ? what
                            : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace gradekit
