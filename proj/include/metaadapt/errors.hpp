#pragma once

#include <stdexcept>
#include <string>

namespace metaadapt {

// Malformed graphs, layout mismatches, empty batches.
class StructuralError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN/Inf encountered anywhere in a computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid hyperparameters or run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input files, label problems, insufficient examples.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace metaadapt
