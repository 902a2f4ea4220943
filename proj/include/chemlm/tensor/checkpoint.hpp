#pragma once

#include <string>
#include <utility>
#include <vector>

#include "chemlm/tensor/tensor.hpp"

namespace chemlm::tg {

// Binary checkpoint: magic "MFCK1", then per-parameter records
//   u32 name length (LE), UTF-8 name, u32 rank (LE),
//   rank x u64 dims (LE), raw f32 values (LE).
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& params);

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path);

}  // namespace chemlm::tg
