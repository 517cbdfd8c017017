#pragma once

#include <filesystem>

#include "pvg/errors.hpp"
#include "pvg/image.hpp"

namespace pvg {

float srgb_encode(float linear);
float srgb_decode(float encoded);

/// 8-bit PNG, sRGB-encoded from linear values in [0, 1]. One or three channels.
void write_png(const std::filesystem::path& path, const ImageF& linear);
/// Reads an 8/16-bit gray, gray+alpha, RGB or RGBA PNG as linear RGB (three
/// channels) or, when `decode_srgb` is false, raw values in [0, 1].
ImageF read_png(const std::filesystem::path& path, bool decode_srgb = true);
/// Single-channel read without sRGB decoding (for masks).
ImageF read_png_gray(const std::filesystem::path& path);

/// ASCII PPM (P3), sRGB-encoded.
void write_ppm(const std::filesystem::path& path, const ImageF& linear);
ImageF read_ppm(const std::filesystem::path& path);

/// Raw little-endian float32 dump: "PVGC", u32 height, u32 width, u32 channels, data in HWC order.
void write_channels(const std::filesystem::path& path, const ImageF& img);
ImageF read_channels(const std::filesystem::path& path);

/// Dispatch on extension: .png, .ppm, .pvgc. PVGC data is returned as stored.
ImageF read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const ImageF& linear);

}  // namespace pvg
