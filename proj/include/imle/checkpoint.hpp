#pragma once

#include <string>

#include "imle/optim.hpp"

namespace imle {

// Checkpoints are a flat little-endian f32 buffer (<prefix>.bin) plus a JSON
// sidecar (<prefix>.json) listing {name, shape, offset} per parameter.
void save_checkpoint(const ParamList& params, const std::string& prefix);

// Loads values into an existing parameter list; names and shapes must match.
void load_checkpoint(ParamList& params, const std::string& prefix);

} // namespace imle
