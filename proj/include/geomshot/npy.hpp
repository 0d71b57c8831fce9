#pragma once

// Minimal NPY codec for single-hand keypoint files: format versions 1.0 and
// 2.0, little-endian '<f4' or '<f8', C order, shape (21, 3). Anything else is
// rejected with a Format error whose field() names the offending header key
// ("magic", "version", "header", "descr", "fortran_order", "shape", "data").

#include <filesystem>
#include <string>
#include <string_view>

#include "geomshot/geometry.hpp"

namespace geomshot {

HandKeypoints decode_keypoints(std::string_view bytes);
HandKeypoints load_keypoints(const std::filesystem::path& path);

// Version 1.0, '<f8', header laid out exactly as numpy.save writes it.
std::string encode_keypoints(const HandKeypoints& hand);
void write_keypoints(const std::filesystem::path& path, const HandKeypoints& hand);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace geomshot
