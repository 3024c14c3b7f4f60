/*
 * Copyright 2026 The PPS Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pps::zip {

struct Entry {
  std::string name;
  std::string data;
};

// Writes a deterministic archive: entries in the given order, deflated,
// fixed 1980-01-01 timestamps. Identical input yields identical bytes.
std::string write(const std::vector<Entry>& entries);

// Reads stored (method 0) and deflated (method 8) entries in central
// directory order. Directories are skipped. No zip64 support.
std::vector<Entry> read(std::string_view archive);

}  // namespace pps::zip
