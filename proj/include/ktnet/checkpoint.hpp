#ifndef KTNET_CHECKPOINT_HPP
#define KTNET_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace ktnet {

// Flat binary container:
//   magic "KTNETCKPT", u32 version,
//   u32 header length + UTF-8 JSON header (model hyperparameters, train
//   config, trainer state),
//   u32 record count, then per record:
//   u32 name length, name bytes, u32 rank, u64 dims, raw little-endian f64s.
// Records cover every named parameter and optimizer moment; they are written
// in ascending name order so identical states produce identical bytes.
inline constexpr char kCheckpointMagic[] = "KTNETCKPT";
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
    std::vector<int64_t> shape;
    std::vector<double> values;
};

struct Checkpoint {
    nlohmann::json header;
    std::map<std::string, CheckpointRecord> records;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ktnet

#endif
