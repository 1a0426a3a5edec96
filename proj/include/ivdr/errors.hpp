#pragma once

#include <stdexcept>
#include <string>

namespace ivdr {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Z or A value outside {0,1}
struct InvalidTreatmentCoding : Error {
  using Error::Error;
};

// NaN / non-finite cell; carries the offending row and column
struct MissingData : Error {
  MissingData(std::size_t row, const std::string& column)
      : Error("missing or non-finite value at row " + std::to_string(row) +
              ", column '" + column + "'"),
        row(row), column(column) {}
  std::size_t row;
  std::string column;
};

// one-arm instrument, too few rows, or a singular estimating system
struct DegenerateDesign : Error {
  using Error::Error;
};

// a model/term specification references something that does not exist
struct SpecError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

// Var(V) = 0: the clever covariate is undefined
struct DegenerateModifier : Error {
  using Error::Error;
};

// singular fluctuation system in the TMLE targeting step
struct TmleDegenerate : Error {
  using Error::Error;
};

}  // namespace ivdr
