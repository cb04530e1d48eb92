#pragma once

#include <string>

#include "bss/phantom.hpp"
#include "bss/trainer.hpp"

namespace bss {

/// Everything a run can be configured with. Config files are JSON with one
/// section per module; every key is optional and defaults to the module
/// default. Unknown sections or keys are rejected.
struct FullConfig {
  TrainerConfig trainer;
  PhantomConfig phantom;
  SplitSpec split;
};

FullConfig load_config_file(const std::string& path);
void apply_config_text(FullConfig& config, const std::string& json_text,
                       const std::string& origin);

/// Fully-resolved echo of a config, suitable for archiving in a run
/// directory and for reloading.
std::string resolved_config_json(const FullConfig& config);

}  // namespace bss
