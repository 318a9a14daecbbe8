#pragma once

#include <stdexcept>
#include <string>

namespace metateach {

// Base of every error the library raises. `code()` is the stable identifier
// used in protocol error messages.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define METATEACH_DEFINE_ERROR(Name, code_string)                  \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& what) : Error(code_string, what) {} \
  };

METATEACH_DEFINE_ERROR(DimensionError, "dimension")
METATEACH_DEFINE_ERROR(UnderdeterminedError, "underdetermined")
METATEACH_DEFINE_ERROR(EmptyHistoryError, "empty_history")
METATEACH_DEFINE_ERROR(ValidationError, "validation")
METATEACH_DEFINE_ERROR(CapabilityError, "capability")
METATEACH_DEFINE_ERROR(PhaseError, "wrong_phase")
METATEACH_DEFINE_ERROR(NoFallbackError, "no_fallback")
METATEACH_DEFINE_ERROR(InvalidTrajectoryError, "invalid_trajectory")
METATEACH_DEFINE_ERROR(ModeError, "mode")
METATEACH_DEFINE_ERROR(DuplicateSessionError, "duplicate_session")
METATEACH_DEFINE_ERROR(UnknownSessionError, "unknown_session")
METATEACH_DEFINE_ERROR(MalformedLogError, "malformed_log")
METATEACH_DEFINE_ERROR(EmptyGroupError, "empty_group")
METATEACH_DEFINE_ERROR(UndefinedCorrelationError, "undefined_correlation")
METATEACH_DEFINE_ERROR(ConfigError, "config")

#undef METATEACH_DEFINE_ERROR

}  // namespace metateach
