// segstream/params_json.h
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

#ifndef SEGSTREAM_PARAMS_JSON_H_
#define SEGSTREAM_PARAMS_JSON_H_

#include <json.hpp>

#include "segstream/params.h"

namespace segstream {

// The bare {name: {"shape": [...], "data": [...]}} object, shared between the
// standalone parameter-set format and the checkpoint wrapper.
nlohmann::ordered_json ParamsToJsonObject(const ParameterSet& params);
ParameterSet ParamsFromJsonObject(const nlohmann::json& obj);

}  // namespace segstream

#endif  // SEGSTREAM_PARAMS_JSON_H_
