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

#ifndef PHONOKWS_UTF8_HPP_
#define PHONOKWS_UTF8_HPP_

#include <string>
#include <string_view>

#include "phonokws/error.hpp"

namespace phonokws {

PHONOKWS_DEFINE_ERROR(InvalidUtf8);

// Decodes UTF-8 to codepoints. Throws InvalidUtf8 on malformed input
// (overlong forms, surrogates, truncated sequences).
std::u32string utf8_decode(std::string_view s);

std::string utf8_encode(std::u32string_view s);
std::string utf8_encode(char32_t cp);

}  // namespace phonokws

#endif  // PHONOKWS_UTF8_HPP_
