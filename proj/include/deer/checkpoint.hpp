#pragma once

#include <filesystem>
#include <optional>

#include <nlohmann/json.hpp>

#include "deer/optim.hpp"
#include "deer/params.hpp"

namespace deer {

// Binary parameter checkpoint:
//   "DEER1" | u32 version | u64 count | count x entry | u8 has_optimizer [| optimizer]
//   entry = u32 name_len | name | u64 rows | u64 cols | u8 frozen | f64[rows*cols]
//           | u64 moment_count | (f64[rows*cols] m, f64[rows*cols] v when moment_count > 0)
//   optimizer = f64 lr, beta1, beta2, eps, weight_decay | u64 step
// Values are little-endian IEEE-754 doubles, so round trips are bit-exact.
inline constexpr char kCheckpointMagic[] = "DEER1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParamStore params;
  std::optional<AdamWState> optimizer;
};

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const AdamWState* optimizer = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies values and freeze flags by name into a store built from the same
// architecture. Missing names or shape mismatches raise CompatError.
void restore_params(ParamStore& target, const ParamStore& source);

// "<checkpoint>.json" next to the binary file.
std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace deer
