#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace deer {

enum class ErrorKind {
  shape,
  index,
  numeric,
  domain,
  argument,
  config,
  data,
  compat,
  contract,
};

// Every failure raised by the library is a deer::Error tagged with its kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

std::string_view to_string(ErrorKind kind) noexcept;

// Coarse category reported by the command line tool: config|data|compat|numeric.
std::string_view cli_category(ErrorKind kind) noexcept;

#define DEER_DEFINE_ERROR(Name, Kind) \
  struct Name : Error {               \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

DEER_DEFINE_ERROR(ShapeError, shape)
DEER_DEFINE_ERROR(IndexError, index)
DEER_DEFINE_ERROR(NumericError, numeric)
DEER_DEFINE_ERROR(DomainError, domain)
DEER_DEFINE_ERROR(ArgumentError, argument)
DEER_DEFINE_ERROR(ConfigError, config)
DEER_DEFINE_ERROR(DataError, data)
DEER_DEFINE_ERROR(CompatError, compat)
DEER_DEFINE_ERROR(ContractError, contract)

#undef DEER_DEFINE_ERROR

}  // namespace deer
