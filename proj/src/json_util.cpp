// Copyright 2026 The cptk Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "json_util.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "cptk/error.hpp"

namespace cptk::json_util {

Json Real(double v) {
  if (std::isnan(v)) throw NumericalError("cannot serialise NaN");
  if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
  return v;
}

double Real(const Json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw DataError(DataErrorCode::kBadManifest, "bad real value '" + s + "'");
  }
  return j.get<double>();
}

std::string ReadText(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace cptk::json_util
