#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <json.hpp>

namespace riot {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input, violated type invariant or unmet precondition.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A numerical routine failed (non-convergence, overflow, non-finite objective).
/// Carries a JSON document describing the failure for diagnostics.
class SolverFailure : public Error {
 public:
  explicit SolverFailure(const std::string& what, nlohmann::json diagnostics = nlohmann::json::object())
      : Error(what), diagnostics_(std::move(diagnostics)) {}

  const nlohmann::json& diagnostics() const noexcept { return diagnostics_; }

 private:
  nlohmann::json diagnostics_;
};

}  // namespace riot
