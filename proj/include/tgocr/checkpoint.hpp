#pragma once

#include <filesystem>

#include "tgocr/model.hpp"

namespace tgocr {

// Checkpoint file layout:
//   8-byte magic "TGOCRCK1"
//   u32 little-endian manifest length
//   UTF-8 JSON manifest: format version, architecture tag, layer descriptor
//     list with shapes, seed, parameter count
//   each parameter tensor (weights then bias, manifest order) as
//     little-endian 32-bit floats
//   u32 little-endian CRC-32 of every preceding byte
//
// Files are written to a temporary sibling and renamed into place.
void save_checkpoint(SequentialModel<float>& model, const std::filesystem::path& path);

SequentialModel<float> load_checkpoint(const std::filesystem::path& path);

// CRC-32 (reflected 0x04C11DB7, as used by zip/png).
std::uint32_t crc32(const std::uint8_t* data, std::size_t len);

} // namespace tgocr
