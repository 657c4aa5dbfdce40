// Copyright (c) the wmkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef WM_CONFIG_HPP_
#define WM_CONFIG_HPP_

#include <map>
#include <string>

#include "wm/training.hpp"

namespace wm::config {

// "key = value" lines, '#' starts a comment. Keys are listed in the README;
// an unknown key is an error that names the offending field.
std::map<std::string, std::string> parse_file(const std::string& path);
std::map<std::string, std::string> parse_text(const std::string& text);

// Builds a training config from defaults overridden by the file entries.
training::TrainConfig train_config_from(
    const std::map<std::string, std::string>& entries);

}  // namespace wm::config

#endif  // WM_CONFIG_HPP_
