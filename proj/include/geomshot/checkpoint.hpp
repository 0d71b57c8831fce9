#pragma once

// Checkpoint container:
//
//   bytes 0..7    magic "GSCKPT01"
//   bytes 8..15   header length H, little-endian uint64
//   bytes 16..    H bytes of UTF-8 JSON:
//                   {"format": "geomshot-checkpoint", "version": 1,
//                    "encoder": {...EncoderConfig...},
//                    "metadata": {string: string},
//                    "tensors": [{"name", "dtype": "f8", "shape", "byte_offset"}],
//                    "blob_size": N}
//   then          N bytes: the tensors' values as little-endian float64,
//                 row-major, concatenated at their byte offsets.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "geomshot/nnet.hpp"

namespace geomshot::nnet {

struct Checkpoint {
  EncoderConfig encoder;
  std::map<std::string, std::string> metadata;
  std::vector<ParamTensor> tensors;  // every encoder tensor, buffers included
};

Checkpoint make_checkpoint(const Encoder& encoder, std::map<std::string, std::string> metadata = {});
Encoder encoder_from_checkpoint(const Checkpoint& checkpoint);

std::string serialize_checkpoint(const Checkpoint& checkpoint);
// Throws CorruptCheckpoint on any header/blob inconsistency.
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace geomshot::nnet
