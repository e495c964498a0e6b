// Copyright 2026  The phonokws authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PHONOKWS_ERROR_HPP_
#define PHONOKWS_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace phonokws {

// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define PHONOKWS_DEFINE_ERROR(NAME)                          \
  class NAME : public ::phonokws::Error {                    \
   public:                                                   \
    explicit NAME(const std::string& msg) : Error(msg) {}    \
  }

}  // namespace phonokws

#endif  // PHONOKWS_ERROR_HPP_
