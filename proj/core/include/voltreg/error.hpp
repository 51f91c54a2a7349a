#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace voltreg {

/// Broad failure classes. The CLI maps each one to a distinct exit code.
enum class ErrorCategory {
  kConfig,
  kParse,
  kValidation,
  kNumerical,
  kIo,
  kState,
};

std::string_view category_name(ErrorCategory c) noexcept;

/// Exit code used by the command-line front end for a given category.
int exit_code(ErrorCategory c) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] void fail(ErrorCategory category, const std::string& what);

}  // namespace voltreg
