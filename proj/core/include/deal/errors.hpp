#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace deal {

/// Tensor or operator dimensions do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A linear solve or power iteration produced non-finite values.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, std::size_t sample)
      : std::runtime_error(what), sample_(sample) {}

  std::size_t sample() const noexcept { return sample_; }

 private:
  std::size_t sample_;
};

/// Malformed file, manifest or operator description.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace deal
