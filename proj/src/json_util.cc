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

#include "batchloop/json_util.h"

#include <fstream>
#include <limits>
#include <utility>


namespace batchloop {

Json MatrixToJson(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Eigen::MatrixXd MatrixFromJson(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw Error("matrix JSON has " + std::to_string(data.size()) +
                " values for a " + std::to_string(rows) + "x" +
                std::to_string(cols) + " matrix");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = data[r * cols + c].get<double>();
    }
  }
  return m;
}

Json VectorToJson(const Eigen::VectorXd& v) {
  return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd VectorFromJson(const Json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), values.size());
}

void WriteJsonFile(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

Json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw IoError(path + ": " + e.what());
  }
}

JsonObjectReader::JsonObjectReader(const Json& j, std::string path)
    : json_(j), path_(std::move(path)) {
  if (!json_.is_object()) throw ConfigError(path_, "expected a JSON object");
}

std::string JsonObjectReader::ChildPath(const std::string& key) const {
  return path_.empty() ? key : path_ + "." + key;
}

const Json* JsonObjectReader::Fetch(const std::string& key) {
  consumed_.insert(key);
  const auto it = json_.find(key);
  return it == json_.end() ? nullptr : &*it;
}

const Json* JsonObjectReader::Child(const std::string& key) {
  return Fetch(key);
}

void JsonObjectReader::Read(const std::string& key, double* out) {
  const Json* v = Fetch(key);
  if (!v) return;
  if (!v->is_number()) throw ConfigError(ChildPath(key), "expected a number");
  *out = v->get<double>();
}

void JsonObjectReader::Read(const std::string& key, int* out) {
  const Json* v = Fetch(key);
  if (!v) return;
  if (!v->is_number_integer()) {
    throw ConfigError(ChildPath(key), "expected an integer");
  }
  const auto value = v->get<std::int64_t>();
  if (value < std::numeric_limits<int>::min() ||
      value > std::numeric_limits<int>::max()) {
    throw ConfigError(ChildPath(key), "integer out of range");
  }
  *out = static_cast<int>(value);
}

void JsonObjectReader::Read(const std::string& key, bool* out) {
  const Json* v = Fetch(key);
  if (!v) return;
  if (!v->is_boolean()) throw ConfigError(ChildPath(key), "expected a boolean");
  *out = v->get<bool>();
}

void JsonObjectReader::Read(const std::string& key, std::string* out) {
  const Json* v = Fetch(key);
  if (!v) return;
  if (!v->is_string()) throw ConfigError(ChildPath(key), "expected a string");
  *out = v->get<std::string>();
}

void JsonObjectReader::Read(const std::string& key, std::uint64_t* out) {
  const Json* v = Fetch(key);
  if (!v) return;
  if (!v->is_number_unsigned()) {
    throw ConfigError(ChildPath(key), "expected a non-negative integer");
  }
  *out = v->get<std::uint64_t>();
}

void JsonObjectReader::Read(const std::string& key, std::vector<double>* out) {
  const Json* v = Fetch(key);
  if (!v) return;
  if (!v->is_array()) throw ConfigError(ChildPath(key), "expected an array");
  std::vector<double> values;
  for (std::size_t i = 0; i < v->size(); ++i) {
    if (!(*v)[i].is_number()) {
      throw ConfigError(ChildPath(key) + "[" + std::to_string(i) + "]",
                        "expected a number");
    }
    values.push_back((*v)[i].get<double>());
  }
  *out = std::move(values);
}

void JsonObjectReader::Finish() const {
  for (const auto& [key, value] : json_.items()) {
    if (!consumed_.count(key)) throw ConfigError(ChildPath(key), "unknown key");
  }
}

}  // namespace batchloop
