// segstream/params.cc
//
// Copyright 2026 The segstream Authors
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

#include "segstream/params.h"

#include "segstream/params_json.h"

namespace segstream {

void ParameterSet::Insert(const std::string& name, Tensor t) {
  SEG_CHECK(!Contains(name), "duplicate parameter name '" << name << "'");
  params_.emplace(name, std::move(t));
}

Tensor& ParameterSet::Get(const std::string& name) {
  auto it = params_.find(name);
  SEG_CHECK(it != params_.end(), "unknown parameter '" << name << "'");
  return it->second;
}

const Tensor& ParameterSet::Get(const std::string& name) const {
  auto it = params_.find(name);
  SEG_CHECK(it != params_.end(), "unknown parameter '" << name << "'");
  return it->second;
}

size_t ParameterSet::TotalElements() const {
  size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

nlohmann::ordered_json ParamsToJsonObject(const ParameterSet& params) {
  nlohmann::ordered_json body = nlohmann::ordered_json::object();
  for (const auto& [name, t] : params) {
    nlohmann::ordered_json entry;
    entry["shape"] = t.shape;
    entry["data"] = t.data;
    body[name] = std::move(entry);
  }
  return body;
}

ParameterSet ParamsFromJsonObject(const nlohmann::json& obj) {
  SEG_CHECK(obj.is_object(), "parameter block must be a JSON object");
  ParameterSet out;
  for (const auto& [name, entry] : obj.items()) {
    SEG_CHECK(entry.contains("shape") && entry.contains("data"),
              "parameter '" << name << "' missing shape or data");
    out.Insert(name, Tensor(entry["shape"].get<std::vector<int>>(),
                            entry["data"].get<std::vector<double>>()));
  }
  return out;
}

std::string ParameterSet::ToJson() const {
  nlohmann::ordered_json doc;
  doc["format_version"] = kFormatVersion;
  doc["parameters"] = ParamsToJsonObject(*this);
  return doc.dump();
}

ParameterSet ParameterSet::FromJson(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    Fail(std::string("parameter set parse failure: ") + e.what());
  }
  SEG_CHECK(doc.contains("format_version") && doc["format_version"].is_number_integer(),
            "parameter set missing format_version");
  SEG_CHECK(doc["format_version"].get<int>() == kFormatVersion,
            "unsupported parameter format version " << doc["format_version"].get<int>());
  SEG_CHECK(doc.contains("parameters"), "parameter set missing 'parameters' object");
  return ParamsFromJsonObject(doc["parameters"]);
}

}  // namespace segstream
