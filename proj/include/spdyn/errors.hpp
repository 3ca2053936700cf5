#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace spdyn {

// Input errors map to CLI exit code 2, estimation errors to exit code 1.
enum class ErrorCategory { input, estimation };

class Error : public std::runtime_error {
 public:
  Error(std::string kind, ErrorCategory category, const std::string& msg)
      : std::runtime_error(msg), kind_(std::move(kind)), category_(category) {}

  const std::string& kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_; }

 private:
  std::string kind_;
  ErrorCategory category_;
};

#define SPDYN_DEFINE_ERROR(Name, Category)                                    \
  class Name : public Error {                                                 \
   public:                                                                    \
    explicit Name(const std::string& msg) : Error(#Name, Category, msg) {}    \
  };

SPDYN_DEFINE_ERROR(IoError, ErrorCategory::input)
SPDYN_DEFINE_ERROR(ConfigError, ErrorCategory::input)
SPDYN_DEFINE_ERROR(DuplicateError, ErrorCategory::input)
SPDYN_DEFINE_ERROR(LabelError, ErrorCategory::input)
SPDYN_DEFINE_ERROR(SelfLoopError, ErrorCategory::input)
SPDYN_DEFINE_ERROR(ShapeError, ErrorCategory::input)
SPDYN_DEFINE_ERROR(IndexError, ErrorCategory::input)
SPDYN_DEFINE_ERROR(InsufficientTimeError, ErrorCategory::input)
SPDYN_DEFINE_ERROR(DomainError, ErrorCategory::estimation)
SPDYN_DEFINE_ERROR(NumericError, ErrorCategory::estimation)
SPDYN_DEFINE_ERROR(RankError, ErrorCategory::estimation)
SPDYN_DEFINE_ERROR(SingularError, ErrorCategory::estimation)
SPDYN_DEFINE_ERROR(UnderIdentifiedError, ErrorCategory::estimation)
SPDYN_DEFINE_ERROR(DegenerateCandidateError, ErrorCategory::estimation)
SPDYN_DEFINE_ERROR(InsufficientUnitsError, ErrorCategory::estimation)
SPDYN_DEFINE_ERROR(StabilityError, ErrorCategory::estimation)
SPDYN_DEFINE_ERROR(NotAvailableError, ErrorCategory::estimation)
SPDYN_DEFINE_ERROR(DegenerateGroupingError, ErrorCategory::estimation)
SPDYN_DEFINE_ERROR(SeparationError, ErrorCategory::estimation)

#undef SPDYN_DEFINE_ERROR

class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t row)
      : Error("ParseError", ErrorCategory::input, msg), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// Missing (unit, time) cells of an unbalanced panel.
class BalanceError : public Error {
 public:
  using Cell = std::pair<std::string, std::int64_t>;
  BalanceError(const std::string& msg, std::vector<Cell> missing)
      : Error("BalanceError", ErrorCategory::input, msg), missing_(std::move(missing)) {}
  const std::vector<Cell>& missing() const noexcept { return missing_; }

 private:
  std::vector<Cell> missing_;
};

class DegenerateDistanceError : public Error {
 public:
  DegenerateDistanceError(const std::string& msg, std::string a, std::string b)
      : Error("DegenerateDistanceError", ErrorCategory::input, msg),
        pair_(std::move(a), std::move(b)) {}
  const std::pair<std::string, std::string>& pair() const noexcept { return pair_; }

 private:
  std::pair<std::string, std::string> pair_;
};

class WeakInstrumentError : public Error {
 public:
  WeakInstrumentError(const std::string& msg, std::size_t unit)
      : Error("WeakInstrumentError", ErrorCategory::estimation, msg), unit_(unit) {}
  std::size_t unit() const noexcept { return unit_; }

 private:
  std::size_t unit_;
};

class ConditionError : public Error {
 public:
  ConditionError(const std::string& msg, double condition)
      : Error("ConditionError", ErrorCategory::estimation, msg), condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

}  // namespace spdyn
