#pragma once

#include <stdexcept>
#include <string>

namespace promptrl {

/// Bad configuration, bad input files, violated call preconditions. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Transport failures, degenerate LM responses, aborted pipelines. CLI exit code 3.
class ProviderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A provider error that aborted a multi-round construction part-way through.
class PipelineError : public ProviderError {
 public:
  PipelineError(const std::string& message, int rounds_completed)
      : ProviderError(message), rounds_completed(rounds_completed) {}

  int rounds_completed = 0;
};

/// Broken internal invariant (non-finite gradients, invalid distributions). CLI exit code 4.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace promptrl
