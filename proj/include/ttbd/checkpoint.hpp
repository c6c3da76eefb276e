#pragma once

#include <string>

#include "ttbd/model.hpp"

namespace ttbd {

/// Binary model checkpoint. Layout: magic "TTBD", format version u32,
/// num_classes u32, layer count u32, then per layer a type tag u32, the
/// layer's shape ints (u32) and its little-endian float32 weight/bias
/// buffers. Round-trips byte-exactly.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace ttbd
