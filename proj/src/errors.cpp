#include "deer/errors.hpp"

namespace deer {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::index: return "index";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::domain: return "domain";
    case ErrorKind::argument: return "argument";
    case ErrorKind::config: return "config";
    case ErrorKind::data: return "data";
    case ErrorKind::compat: return "compat";
    case ErrorKind::contract: return "contract";
  }
  return "unknown";
}

std::string_view cli_category(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::data: return "data";
    case ErrorKind::compat: return "compat";
    case ErrorKind::shape:
    case ErrorKind::index:
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::domain:
    case ErrorKind::argument:
    case ErrorKind::config:
    case ErrorKind::contract: return "config";
  }
  return "config";
}

}  // namespace deer
