#pragma once

#include <stdexcept>
#include <string>

namespace gammamix {

/// Malformed or unreadable input (files, schemas, configuration).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A fitting step could not proceed (empty or degenerate component,
/// data point with zero density under every component).
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// k-means seeding could not produce the requested number of clusters.
class InitializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The sampler target was not finite at the starting point.
class SamplerInitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gammamix
