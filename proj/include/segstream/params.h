// segstream/params.h
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

#ifndef SEGSTREAM_PARAMS_H_
#define SEGSTREAM_PARAMS_H_

#include <map>
#include <string>
#include <vector>

#include "segstream/tensor.h"

namespace segstream {

// Named map of tensors. Iteration is by name order, which is stable across
// runs for a fixed set of names.
class ParameterSet {
 public:
  static constexpr int kFormatVersion = 1;

  bool Contains(const std::string& name) const { return params_.count(name) > 0; }
  void Insert(const std::string& name, Tensor t);
  Tensor& Get(const std::string& name);
  const Tensor& Get(const std::string& name) const;
  size_t size() const { return params_.size(); }
  size_t TotalElements() const;

  std::map<std::string, Tensor>::const_iterator begin() const { return params_.begin(); }
  std::map<std::string, Tensor>::const_iterator end() const { return params_.end(); }
  std::map<std::string, Tensor>::iterator begin() { return params_.begin(); }
  std::map<std::string, Tensor>::iterator end() { return params_.end(); }

  // {"format_version": 1, "parameters": {name: {"shape": [...], "data": [...]}}}
  std::string ToJson() const;
  static ParameterSet FromJson(const std::string& json_text);

 private:
  std::map<std::string, Tensor> params_;
};

}  // namespace segstream

#endif  // SEGSTREAM_PARAMS_H_
