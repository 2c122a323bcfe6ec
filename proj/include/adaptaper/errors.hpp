#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace adaptaper {

// Argument outside the mathematical domain of a function (negative range, x outside [0,1], ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Operand shapes that do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Cholesky hit a non-positive pivot.
class NotPositiveDefinite : public std::runtime_error {
 public:
  NotPositiveDefinite(std::size_t pivot, double value)
      : std::runtime_error("matrix is not positive definite: pivot " + std::to_string(pivot) +
                           " has value " + std::to_string(value)),
        pivot_(pivot),
        value_(value) {}

  [[nodiscard]] std::size_t pivot() const noexcept { return pivot_; }
  [[nodiscard]] double value() const noexcept { return value_; }

 private:
  std::size_t pivot_;
  double value_;
};

// An iterative procedure ran out of budget. Carries the best iterate seen so far.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> best, double score)
      : std::runtime_error(what), best_(std::move(best)), score_(score) {}

  [[nodiscard]] const std::vector<double>& best() const noexcept { return best_; }
  // Violation count for range selection, objective value for optimizers.
  [[nodiscard]] double score() const noexcept { return score_; }

 private:
  std::vector<double> best_;
  double score_;
};

// Model parameters that cannot be identified from the data at hand.
class IdentifiabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace adaptaper
