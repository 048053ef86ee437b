#pragma once

#include <stdexcept>
#include <string>

namespace pseudotrack {

// Base of every library error. Validation errors are caller mistakes (bad
// input files, violated preconditions); everything else is a runtime failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

#define PSEUDOTRACK_DEFINE_ERROR(Name, Base) \
  class Name : public Base {                 \
   public:                                   \
    using Base::Base;                        \
  };

// geometry
PSEUDOTRACK_DEFINE_ERROR(CheiralityViolation, Error)

// reconstruction
PSEUDOTRACK_DEFINE_ERROR(DegenerateGeometry, Error)
PSEUDOTRACK_DEFINE_ERROR(InsufficientObservations, Error)

// labeling
PSEUDOTRACK_DEFINE_ERROR(EmptyInput, Error)
PSEUDOTRACK_DEFINE_ERROR(UnassignedCluster, Error)
PSEUDOTRACK_DEFINE_ERROR(GateRejected, Error)

// association / learning
PSEUDOTRACK_DEFINE_ERROR(ShapeMismatch, ValidationError)
PSEUDOTRACK_DEFINE_ERROR(ZeroVector, Error)

// tracker
PSEUDOTRACK_DEFINE_ERROR(SingularInnovation, Error)
PSEUDOTRACK_DEFINE_ERROR(InputNotSorted, ValidationError)

// metrics
PSEUDOTRACK_DEFINE_ERROR(DuplicateID, ValidationError)
PSEUDOTRACK_DEFINE_ERROR(EmptyAfterFilter, Error)

// scene I/O
PSEUDOTRACK_DEFINE_ERROR(MissingFile, ValidationError)
PSEUDOTRACK_DEFINE_ERROR(DanglingReference, ValidationError)

#undef PSEUDOTRACK_DEFINE_ERROR

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : ValidationError(file + ":" + std::to_string(line) + ": " + what),
        file_(file),
        line_(line) {}

  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

}  // namespace pseudotrack
