#pragma once

#include <optional>
#include <string>

#include "diffret/trainer.hpp"

namespace diffret {

// Everything needed to score queries: config snapshot, schedule, encoders
// (absent for pre-encoded pipelines) and denoisers (absent for
// discriminative-only training).
struct Checkpoint {
    TrainConfig config;
    int64_t text_input_dim = 0;
    int64_t audio_input_dim = 0;
    bool identity_encoders = false;
    DiffusionSchedule schedule;
    std::optional<EncoderPair> encoders;
    std::optional<DenoiserPair> denoisers;
};

// Binary format: magic "DFAT", version u32, then length-prefixed named
// sections per parameter group; all floats little-endian f64. Save/load round
// trips bit-exactly.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace diffret
