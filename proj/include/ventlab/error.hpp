#pragma once

#include <stdexcept>
#include <string>

namespace ventlab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParameterError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct CodecError : Error { using Error::Error; };
struct DataError : Error { using Error::Error; };
struct ContractError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace ventlab
