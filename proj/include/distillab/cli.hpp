// Copyright 2026 The distillab Authors
// SPDX-License-Identifier: Apache-2.0
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

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "distillab/data.hpp"
#include "distillab/training.hpp"

namespace dlab::cli {

/// Flat key=value settings. Keys are the kebab-case flag names.
using Settings = std::map<std::string, std::string>;

struct KeySpec {
  const char* key;
  const char* default_value;
  const char* help;
};

/// Every key accepted in a config file, with its default.
const std::vector<KeySpec>& config_keys();

/// Parses "key=value" lines; '#' starts a comment, blank lines are ignored.
/// ParseError (with line number) on malformed lines or unknown keys.
Settings parse_config(const std::string& text);

/// Fully typed view of a resolved settings map.
struct ResolvedConfig {
  GeneratorConfig generator;
  TrainConfig train;
  std::size_t max_seq_len = kDefaultMaxSeqLen;
  std::size_t rounds = 1;
  std::size_t top_k = 12;
};

/// InputError naming the key if a value does not parse or violates its range.
ResolvedConfig resolve(const Settings& settings);

/// Defaults, then the config file, then DLAB_SEED, then explicit flags.
Settings layer_settings(const Settings& file, const std::optional<std::string>& env_seed,
                        const Settings& flags);

std::string usage();

/// Entry point behind the `distillab` executable. Returns the exit status:
/// 0 on success, 2 on usage errors (bad flags or a malformed config file), 1 on
/// any other failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dlab::cli
