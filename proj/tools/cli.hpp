// Copyright (c) 2026 SSH-UNet Authors. All Rights Reserved.
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

#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "sshunet/complexity.hpp"
#include "sshunet/network.hpp"
#include "sshunet/trainer.hpp"

namespace sshunet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitIo = 4;

struct KeySpec {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Every recognised `section.key`, in the order written to config files.
const std::vector<KeySpec>& known_keys();

/// Dotted key-value run configuration. Later sources override earlier ones:
/// defaults, then a config file, then command-line values.
class RunConfig {
 public:
  RunConfig();

  /// Throws ConfigError for unknown keys.
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  /// INI with [section] headers; unknown keys are rejected.
  void load_file(const std::filesystem::path& path);
  void load_text(const std::string& text, const std::string& origin);
  std::string to_ini() const;

  UNetConfig network() const;
  OptimConfig optim() const;
  LoopConfig loop(std::uint64_t seed) const;
  Dataset dataset(std::uint64_t seed) const;

 private:
  std::map<std::string, std::string> values_;
};

/// Entry point shared by the executable and the tests. Returns the exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sshunet::cli
