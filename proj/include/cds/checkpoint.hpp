#pragma once

// Checkpoint container for float models. Layout (all integers little-endian):
//
//   bytes 0..7   magic "CDSCKPT\0"
//   u32          format version (1)
//   u32          meta length, then meta bytes (JSON: arch + head layout)
//   u32          entry count
//   per entry:   u32 name length, name bytes,
//                u8 dtype tag (0 = float32),
//                u8 ndim, u32 dims[ndim],
//                raw little-endian values
//
// Entries cover every named parameter and buffer (batchnorm running stats),
// so a reloaded model reproduces the saved one bit-exactly.

#include <string>

#include "cds/nn.hpp"

namespace cds::ckpt {

void save_checkpoint(const nn::Model<float>& model, const std::string& path);

// Rebuilds the model (backbone + attached heads) from the meta header and
// fills every parameter/buffer. Malformed files and arch mismatches throw
// ConfigError.
nn::Model<float> load_checkpoint(const std::string& path);

}  // namespace cds::ckpt
