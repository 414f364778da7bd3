/* Copyright 2026 The rescale-lab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef RESCALE_LAB_ERRORS_H_
#define RESCALE_LAB_ERRORS_H_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rescale {

// Maps onto the process exit codes used by the command-line tool.
enum class ErrorCategory : int {
  kUsage = 2,
  kFormat = 3,
  kNumeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ErrorCategory category)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what)
      : Error(what, ErrorCategory::kUsage) {}
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what)
      : Error(what, ErrorCategory::kNumeric) {}
};

// The rescale factor is too small for the shift budget 32 + k - 8.
class RescalerUnderflow : public Error {
 public:
  explicit RescalerUnderflow(const std::string& what)
      : Error(what, ErrorCategory::kNumeric) {}
};

class OverflowError : public Error {
 public:
  explicit OverflowError(const std::string& what)
      : Error(what, ErrorCategory::kNumeric) {}
};

// An emulated integer intermediate left the range where binary64 is exact.
class OverflowEnvelopeError : public Error {
 public:
  explicit OverflowEnvelopeError(const std::string& what)
      : Error(what, ErrorCategory::kNumeric) {}
};

class CalibrationError : public Error {
 public:
  explicit CalibrationError(const std::string& what)
      : Error(what, ErrorCategory::kNumeric) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what)
      : Error(what, ErrorCategory::kFormat) {}
};

class FormatError : public Error {
 public:
  FormatError(std::uint64_t offset, const std::string& reason)
      : Error("format error at offset " + std::to_string(offset) + ": " +
                  reason,
              ErrorCategory::kFormat),
        offset_(offset),
        reason_(reason) {}

  std::uint64_t offset() const { return offset_; }
  const std::string& reason() const { return reason_; }

 private:
  std::uint64_t offset_;
  std::string reason_;
};

}  // namespace rescale

#endif  // RESCALE_LAB_ERRORS_H_
