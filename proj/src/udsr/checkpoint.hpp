#pragma once

// Flat binary checkpoint container: header (magic, version, flags, count),
// then per parameter: name, shape, float32 little-endian values. Adam state
// rides along behind a header flag.

#include <string>
#include <vector>

#include "udsr/nn.hpp"

namespace udsr {

void save_checkpoint(const std::string& path,
                     const std::vector<ad::Parameter<float>*>& params,
                     bool include_adam = false);

// Loads into an existing parameter set; names and shapes must match the
// registration order used at save time.
void load_checkpoint(const std::string& path,
                     const std::vector<ad::Parameter<float>*>& params);

}  // namespace udsr
