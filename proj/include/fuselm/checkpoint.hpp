#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "fuselm/network.hpp"

namespace fuselm {

// Binary checkpoint ("FLMC"): config block, named f32 tensors, optional Adam
// moments in the same layout, and the number of completed epochs.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  Model model;
  std::optional<ModelAdamState> adam;
  std::uint64_t epochs_completed = 0;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& origin = "<memory>");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fuselm
