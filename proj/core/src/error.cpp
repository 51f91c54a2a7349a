#include "voltreg/error.hpp"

namespace voltreg {

std::string_view category_name(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kParse: return "parse";
    case ErrorCategory::kValidation: return "validation";
    case ErrorCategory::kNumerical: return "numerical";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kState: return "state";
  }
  return "unknown";
}

int exit_code(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::kConfig: return 2;
    case ErrorCategory::kParse: return 3;
    case ErrorCategory::kValidation: return 4;
    case ErrorCategory::kNumerical: return 5;
    case ErrorCategory::kIo: return 6;
    case ErrorCategory::kState: return 7;
  }
  return 1;
}

void fail(ErrorCategory category, const std::string& what) {
  throw Error(category, what);
}

}  // namespace voltreg
