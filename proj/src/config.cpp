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

#include "wm/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace wm::config {

namespace {

std::string trim(const std::string& s) {
  const auto lo = s.find_first_not_of(" \t\r");
  if (lo == std::string::npos) return "";
  const auto hi = s.find_last_not_of(" \t\r");
  return s.substr(lo, hi - lo + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ';')) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

}  // namespace

std::map<std::string, std::string> parse_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": empty key");
    out[key] = value;
  }
  return out;
}

std::map<std::string, std::string> parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_text(buf.str());
}

training::TrainConfig train_config_from(
    const std::map<std::string, std::string>& entries) {
  training::TrainConfig c;
  for (const auto& [key, value] : entries) {
    const auto to_int = [&](int& dst) {
      try {
        dst = std::stoi(value);
      } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key +
                                    "': cannot parse integer '" + value + "'");
      }
    };
    const auto to_double = [&](double& dst) {
      try {
        dst = std::stod(value);
      } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key +
                                    "': cannot parse number '" + value + "'");
      }
    };
    if (key == "dataset") c.dataset = value;
    else if (key == "train_count") to_int(c.train_count);
    else if (key == "test_count") to_int(c.test_count);
    else if (key == "image_size") to_int(c.image_size);
    else if (key == "batch") to_int(c.batch);
    else if (key == "epochs") to_int(c.epochs);
    else if (key == "disc_epochs") to_int(c.disc_epochs);
    else if (key == "lr") to_double(c.lr);
    else if (key == "prenoise_p") to_double(c.prenoise_p);
    else if (key == "attacks") c.attacks = split_list(value);
    else if (key == "msg_len") to_int(c.codec.msg_len);
    else if (key == "slice_len") to_int(c.codec.slice_len);
    else if (key == "block") to_int(c.codec.block);
    else if (key == "votes") to_int(c.codec.votes);
    else if (key == "lambda_e") to_double(c.weights.lambda_e);
    else if (key == "lambda_f") to_double(c.weights.lambda_f);
    else if (key == "lambda_mean") to_double(c.weights.lambda_mean);
    else if (key == "lambda_var") to_double(c.weights.lambda_var);
    else if (key == "seed") {
      try {
        c.seed = std::stoull(value);
      } catch (const std::exception&) {
        throw std::invalid_argument("config key 'seed': cannot parse '" +
                                    value + "'");
      }
    } else if (key == "out_dir") c.out_dir = value;
    else if (key == "checkpoint_every") to_int(c.checkpoint_every);
    else throw std::invalid_argument("unknown config key '" + key + "'");
  }
  c.codec.width = c.image_size;
  c.codec.height = c.image_size;
  return c;
}

}  // namespace wm::config
