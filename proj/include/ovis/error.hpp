// Copyright 2026 The Ovis Authors.
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

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace ovis {

// Every failure raised by the library derives from Error; the C API maps each
// subclass onto one status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that cannot be combined.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Math domain violation (log of a non-positive value, NaN input).
class DomainError : public Error {
 public:
  using Error::Error;
};

// On-disk data does not match its manifest.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Data is well-formed but semantically invalid (overlapping masks, missing
// captions, unplaceable fixtures).
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <typename... Args>
std::string concat_message(Args&&... args) {
  std::ostringstream os;
  (os << ... << std::forward<Args>(args));
  return os.str();
}

}  // namespace detail

template <typename E = ContractError, typename... Args>
[[noreturn]] void fail(Args&&... args) {
  throw E(detail::concat_message(std::forward<Args>(args)...));
}

template <typename E = ContractError, typename... Args>
void require(bool condition, Args&&... args) {
  if (!condition) fail<E>(std::forward<Args>(args)...);
}

}  // namespace ovis
