// Copyright 2026 The batchloop Authors
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

#ifndef BATCHLOOP_JSON_UTIL_H_
#define BATCHLOOP_JSON_UTIL_H_

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "batchloop/common.h"
#include "json.hpp"

namespace batchloop {

using Json = nlohmann::json;

// {"rows": r, "cols": c, "data": [row-major values]}
Json MatrixToJson(const Eigen::MatrixXd& m);
Eigen::MatrixXd MatrixFromJson(const Json& j);

Json VectorToJson(const Eigen::VectorXd& v);
Eigen::VectorXd VectorFromJson(const Json& j);

void WriteJsonFile(const std::string& path, const Json& j);
Json ReadJsonFile(const std::string& path);

// Reads optional fields of a JSON object into pre-defaulted values,
// remembering which keys were consumed so that Finish() can reject unknown
// ones. Every error is a ConfigError carrying the dotted field path.
class JsonObjectReader {
 public:
  JsonObjectReader(const Json& j, std::string path);

  // Leaves `*out` untouched when the key is absent.
  void Read(const std::string& key, double* out);
  void Read(const std::string& key, int* out);
  void Read(const std::string& key, bool* out);
  void Read(const std::string& key, std::string* out);
  void Read(const std::string& key, std::uint64_t* out);
  void Read(const std::string& key, std::vector<double>* out);

  // Marks `key` consumed and returns it, or nullptr when absent.
  const Json* Child(const std::string& key);
  std::string ChildPath(const std::string& key) const;
  void Finish() const;

 private:
  const Json* Fetch(const std::string& key);

  const Json& json_;
  std::string path_;
  std::set<std::string> consumed_;
};

}  // namespace batchloop

#endif  // BATCHLOOP_JSON_UTIL_H_
