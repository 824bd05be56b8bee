#pragma once

#include <string>

#include "refvos/nn.hpp"

namespace refvos {

// Self-describing binary checkpoint: magic + version, then per parameter the
// name, shape and raw float64 values in store order. Round-trips bitwise.
void save_checkpoint(const std::string& path, const nn::ParamStore& params);

// Loads into an existing store; the first name or shape mismatch aborts with
// the offending parameter named.
void load_checkpoint(const std::string& path, nn::ParamStore& params);

}  // namespace refvos
