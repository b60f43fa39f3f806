#pragma once

#include <string>

#include "mocap/optimizer.hpp"
#include "mocap/tensor.hpp"

namespace mocap::num {

// Binary checkpoint: "DMAE" magic, u32 version, a UTF-8 header record (JSON
// by convention), then named parameter records (u32 name length, name, u32
// rank, u32 extents, raw little-endian f64 payload). Round-trips bit-exactly.
struct Checkpoint {
    std::string header;
    NamedParams params;
};

void save_checkpoint(const std::string& path, const std::string& header,
                     const NamedParams& params);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mocap::num
