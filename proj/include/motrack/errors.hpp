#pragma once

#include <stdexcept>
#include <string>

namespace motrack {

struct MalformedFile : std::runtime_error {
  explicit MalformedFile(const std::string& what) : std::runtime_error(what) {}
};

struct ShapeMismatch : std::runtime_error {
  explicit ShapeMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct FrameOutOfRange : std::runtime_error {
  explicit FrameOutOfRange(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyDataset : std::runtime_error {
  explicit EmptyDataset(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyInput : std::runtime_error {
  explicit EmptyInput(const std::string& what) : std::runtime_error(what) {}
};

struct LengthMismatch : std::runtime_error {
  explicit LengthMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct NonScalarLoss : std::runtime_error {
  explicit NonScalarLoss(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace motrack
