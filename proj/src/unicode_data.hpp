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

#ifndef PHONOKWS_UNICODE_DATA_HPP_
#define PHONOKWS_UNICODE_DATA_HPP_

#include <cstdint>
#include <string>

namespace phonokws {

// Full recursive canonical (NFD) decomposition of one codepoint.
// Codepoints with no decomposition map to themselves.
std::u32string canonical_decompose_char(char32_t cp);

// Unicode canonical combining class; 0 for starters.
int combining_class(char32_t cp);

}  // namespace phonokws

#endif  // PHONOKWS_UNICODE_DATA_HPP_
