// Copyright 2026 The LeaderLab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LEADERLAB_ERROR_HPP_
#define LEADERLAB_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace leaderlab {

// Broad failure class. The C API and the CLI map these onto status and exit
// codes; the string code carries the specific condition.
enum class ErrorKind {
  kValidation,
  kUpstream,
  kNumerical,
  kIo,
  kInternal,
};

// All recoverable failures in the library are thrown as Error. code() is a
// stable identifier such as "SumNot100" or "StarTopologyViolation".
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message,
        std::string detail = {})
      : std::runtime_error(message),
        kind_(kind),
        code_(std::move(code)),
        detail_(std::move(detail)) {}

  ErrorKind kind() const { return kind_; }
  const std::string& code() const { return code_; }
  // Optional nested condition, e.g. the scoring error behind InvalidCredence.
  const std::string& detail() const { return detail_; }

 private:
  ErrorKind kind_;
  std::string code_;
  std::string detail_;
};

inline Error ValidationError(std::string code, const std::string& message,
                             std::string detail = {}) {
  return Error(ErrorKind::kValidation, std::move(code), message,
               std::move(detail));
}

inline Error NumericalError(std::string code, const std::string& message) {
  return Error(ErrorKind::kNumerical, std::move(code), message);
}

inline Error UpstreamError(std::string code, const std::string& message,
                           std::string detail = {}) {
  return Error(ErrorKind::kUpstream, std::move(code), message,
               std::move(detail));
}

inline Error IoError(const std::string& message) {
  return Error(ErrorKind::kIo, "IoError", message);
}

}  // namespace leaderlab

#endif  // LEADERLAB_ERROR_HPP_
