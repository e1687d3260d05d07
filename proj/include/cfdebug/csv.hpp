/*
 * Copyright 2026 The cfdebug Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CFDEBUG_CSV_HPP
#define CFDEBUG_CSV_HPP

#include <filesystem>
#include <string>
#include <vector>

namespace cfdebug {

using CsvRow = std::vector<std::string>;

// RFC 4180 quoting; fields are quoted only when they need it.
std::string csv_line(const CsvRow& row);
void write_csv(const std::filesystem::path& path, const CsvRow& header, const std::vector<CsvRow>& rows);
std::vector<CsvRow> read_csv(const std::filesystem::path& path);

}  // namespace cfdebug

#endif  // CFDEBUG_CSV_HPP
