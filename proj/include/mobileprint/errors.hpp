#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace mobileprint {

// Coarse grouping used to derive process exit codes.
enum class ErrorCategory { Config, Planning, Simulation, Solver };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what,
        std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(what), category_(category), index_(index) {}

  ErrorCategory category() const noexcept { return category_; }
  // Sample or step index at which the failure was detected, when meaningful.
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorCategory category_;
  std::optional<std::size_t> index_;
};

#define MOBILEPRINT_DEFINE_ERROR(Name, Category)                           \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what,                                 \
                  std::optional<std::size_t> index = std::nullopt)         \
        : Error(ErrorCategory::Category, what, index) {}                   \
  }

MOBILEPRINT_DEFINE_ERROR(ConfigError, Config);
MOBILEPRINT_DEFINE_ERROR(ParseError, Config);
MOBILEPRINT_DEFINE_ERROR(InvalidSpecError, Config);
MOBILEPRINT_DEFINE_ERROR(InvalidArgumentError, Config);
MOBILEPRINT_DEFINE_ERROR(DimensionError, Config);

MOBILEPRINT_DEFINE_ERROR(PlanningError, Planning);
MOBILEPRINT_DEFINE_ERROR(SynchronizationError, Planning);
MOBILEPRINT_DEFINE_ERROR(IkFailureError, Planning);
MOBILEPRINT_DEFINE_ERROR(JointLimitError, Planning);

MOBILEPRINT_DEFINE_ERROR(DegenerateObservationError, Simulation);
MOBILEPRINT_DEFINE_ERROR(UnknownMarkerError, Simulation);
MOBILEPRINT_DEFINE_ERROR(NoVisibleMarkerError, Simulation);
MOBILEPRINT_DEFINE_ERROR(FilterDivergenceError, Simulation);
MOBILEPRINT_DEFINE_ERROR(VisibilityFault, Simulation);
MOBILEPRINT_DEFINE_ERROR(SimulationFault, Simulation);
MOBILEPRINT_DEFINE_ERROR(InsufficientDataError, Simulation);
MOBILEPRINT_DEFINE_ERROR(VerticalDegeneracyError, Simulation);

#undef MOBILEPRINT_DEFINE_ERROR

// Stable process exit codes for the command line tool.
inline int exit_code_for(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::Config:
      return 2;
    case ErrorCategory::Planning:
      return 3;
    case ErrorCategory::Simulation:
      return 4;
    case ErrorCategory::Solver:
      return 5;
  }
  return 1;
}

}  // namespace mobileprint
