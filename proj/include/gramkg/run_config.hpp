#pragma once

#include <map>
#include <string>

#include "gramkg/trainer.hpp"

namespace gramkg {

/// Fully resolved view of one CLI run: training/model settings plus paths.
/// Built from defaults -> preset -> config file -> command-line overrides,
/// and serialized into the output directory for reproducibility.
struct RunConfig {
  TrainConfig train;
  std::string dataset_dir;
  std::string out_dir;
  std::string checkpoint;

  void apply(const std::string& key, const std::string& value);
  void apply_file(const std::string& path);
  void apply_preset(const std::string& name);  // "nell" or "wiki"

  /// Sorted key=value lines covering every setting above.
  std::string dump() const;
};

/// key = value lines; '#' comments and blank lines ignored.
std::map<std::string, std::string> parse_config_file(const std::string& path);

}  // namespace gramkg
