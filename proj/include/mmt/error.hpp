// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mmt {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class ParseError : public Error { using Error::Error; };
class SchemaError : public Error { using Error::Error; };
class SplitError : public Error { using Error::Error; };
class SamplingError : public Error { using Error::Error; };
class IndexError : public Error { using Error::Error; };
class TransferError : public Error { using Error::Error; };
class EvalError : public Error { using Error::Error; };
class DivergenceError : public Error { using Error::Error; };
class CheckpointError : public Error { using Error::Error; };

}  // namespace mmt
