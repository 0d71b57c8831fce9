#include "geomshot/npy.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "geomshot/error.hpp"

namespace geomshot {

static_assert(std::endian::native == std::endian::little,
              "NPY and checkpoint codecs assume a little-endian host");

namespace {

constexpr std::string_view kMagic = "\x93NUMPY";

[[noreturn]] void format_error(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::Format, "npy " + field + ": " + what, field);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

// Returns the raw text of the value stored under `key` in a numpy header
// dict, up to the next top-level comma.
std::string_view dict_value(std::string_view header, std::string_view key) {
  const std::string quoted_single = "'" + std::string(key) + "'";
  const std::string quoted_double = "\"" + std::string(key) + "\"";
  auto pos = header.find(quoted_single);
  std::size_t key_len = quoted_single.size();
  if (pos == std::string_view::npos) {
    pos = header.find(quoted_double);
    key_len = quoted_double.size();
  }
  if (pos == std::string_view::npos) format_error(std::string(key), "missing from header");
  auto colon = header.find(':', pos + key_len);
  if (colon == std::string_view::npos) format_error("header", "malformed dict");
  std::size_t i = colon + 1;
  int depth = 0;
  std::size_t end = i;
  for (; end < header.size(); ++end) {
    const char c = header[end];
    if (c == '(' || c == '[') ++depth;
    if (c == ')' || c == ']') --depth;
    if ((c == ',' && depth == 0) || (c == '}' && depth == 0)) break;
  }
  return trim(header.substr(i, end - i));
}

std::string strip_quotes(std::string_view v) {
  if (v.size() >= 2 && (v.front() == '\'' || v.front() == '"') && v.back() == v.front())
    return std::string(v.substr(1, v.size() - 2));
  return std::string(v);
}

}  // namespace

HandKeypoints decode_keypoints(std::string_view bytes) {
  if (bytes.size() < 10 || bytes.substr(0, kMagic.size()) != kMagic)
    format_error("magic", "not an NPY file");
  const auto major = static_cast<unsigned char>(bytes[6]);
  const auto minor = static_cast<unsigned char>(bytes[7]);
  std::size_t header_len = 0;
  std::size_t prefix = 0;
  if (major == 1 && minor == 0) {
    header_len = static_cast<unsigned char>(bytes[8]) |
                 (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    prefix = 10;
  } else if (major == 2 && minor == 0) {
    if (bytes.size() < 12) format_error("header", "truncated");
    header_len = 0;
    for (int b = 0; b < 4; ++b)
      header_len |= static_cast<std::size_t>(static_cast<unsigned char>(bytes[8 + b])) << (8 * b);
    prefix = 12;
  } else {
    format_error("version", "unsupported format version " + std::to_string(major) + "." +
                                std::to_string(minor));
  }
  if (bytes.size() < prefix + header_len) format_error("header", "truncated");
  const std::string_view header = bytes.substr(prefix, header_len);

  const std::string descr = strip_quotes(dict_value(header, "descr"));
  std::size_t item_size = 0;
  if (descr == "<f8") {
    item_size = 8;
  } else if (descr == "<f4") {
    item_size = 4;
  } else {
    format_error("descr", "expected '<f4' or '<f8', got '" + descr + "'");
  }

  if (dict_value(header, "fortran_order") != "False")
    format_error("fortran_order", "only C-order arrays are supported");

  std::string shape(dict_value(header, "shape"));
  std::string compact;
  for (char c : shape)
    if (c != ' ') compact.push_back(c);
  if (compact != "(21,3)") format_error("shape", "expected (21, 3), got " + shape);

  const std::size_t count = static_cast<std::size_t>(kNumKeypoints) * 3;
  const std::string_view data = bytes.substr(prefix + header_len);
  if (data.size() != count * item_size)
    format_error("data", "expected " + std::to_string(count * item_size) + " bytes, got " +
                             std::to_string(data.size()));

  HandKeypoints hand;
  double* out = hand.data();
  for (std::size_t i = 0; i < count; ++i) {
    if (item_size == 8) {
      std::memcpy(&out[i], data.data() + 8 * i, 8);
    } else {
      float f;
      std::memcpy(&f, data.data() + 4 * i, 4);
      out[i] = static_cast<double>(f);
    }
  }
  return hand;
}

HandKeypoints load_keypoints(const std::filesystem::path& path) {
  return decode_keypoints(read_file(path));
}

std::string encode_keypoints(const HandKeypoints& hand) {
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (21, 3), }";
  // numpy pads with spaces so magic + version + length + header + '\n' is a
  // multiple of 64 bytes.
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');

  std::string out(kMagic);
  out.push_back('\x01');
  out.push_back('\x00');
  out.push_back(static_cast<char>(header.size() & 0xFF));
  out.push_back(static_cast<char>((header.size() >> 8) & 0xFF));
  out += header;
  const std::size_t offset = out.size();
  out.resize(offset + sizeof(double) * kRawDim);
  std::memcpy(out.data() + offset, hand.data(), sizeof(double) * kRawDim);
  return out;
}

void write_keypoints(const std::filesystem::path& path, const HandKeypoints& hand) {
  write_file(path, encode_keypoints(hand));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'", "path");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'", "path");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to '" + path.string() + "'", "path");
}

}  // namespace geomshot
