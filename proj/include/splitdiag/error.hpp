#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace splitdiag {

/// Raised for invalid input, violated preconditions and degenerate data.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when the pooled covariance stays singular after maximum regularization.
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

/// Non-fatal diagnostics collected by operations that can degrade gracefully.
struct Warnings {
  std::vector<std::string> messages;

  void add(std::string message) { messages.push_back(std::move(message)); }
  bool empty() const noexcept { return messages.empty(); }
};

inline void warn(Warnings* sink, std::string message) {
  if (sink != nullptr) sink->add(std::move(message));
}

}  // namespace splitdiag
