#include "geomshot/checkpoint.hpp"

#include <cstring>
#include <json.hpp>

#include "geomshot/error.hpp"
#include "geomshot/npy.hpp"

namespace geomshot::nnet {

namespace {

constexpr std::string_view kMagic = "GSCKPT01";

[[noreturn]] void corrupt(const std::string& what) {
  throw Error(ErrorCode::CorruptCheckpoint, what);
}

}  // namespace

Checkpoint make_checkpoint(const Encoder& encoder, std::map<std::string, std::string> metadata) {
  Checkpoint ckpt;
  ckpt.encoder = encoder.config();
  ckpt.metadata = std::move(metadata);
  for (const ParamTensor* t : encoder.tensors()) {
    ParamTensor copy = *t;
    copy.grad.setZero();
    copy.version = 0;
    ckpt.tensors.push_back(std::move(copy));
  }
  return ckpt;
}

Encoder encoder_from_checkpoint(const Checkpoint& checkpoint) {
  Encoder enc(checkpoint.encoder, 0);
  enc.load_tensors(checkpoint.tensors);
  return enc;
}

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  nlohmann::ordered_json header;
  header["format"] = "geomshot-checkpoint";
  header["version"] = 1;
  header["encoder"] = {{"input_dim", checkpoint.encoder.input_dim},
                       {"hidden_dim", checkpoint.encoder.hidden_dim},
                       {"num_hidden", checkpoint.encoder.num_hidden},
                       {"embed_dim", checkpoint.encoder.embed_dim},
                       {"dropout", checkpoint.encoder.dropout}};
  header["metadata"] = checkpoint.metadata;
  std::string blob;
  auto tensors = nlohmann::ordered_json::array();
  for (const auto& t : checkpoint.tensors) {
    tensors.push_back({{"name", t.name},
                       {"dtype", "f8"},
                       {"shape", t.shape},
                       {"byte_offset", blob.size()}});
    // Row-major element order regardless of Eigen's storage.
    for (Eigen::Index r = 0; r < t.value.rows(); ++r)
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
        char bytes[8];
        const double v = t.value(r, c);
        std::memcpy(bytes, &v, 8);
        blob.append(bytes, 8);
      }
  }
  header["tensors"] = std::move(tensors);
  header["blob_size"] = blob.size();

  const std::string text = header.dump();
  std::string out(kMagic);
  const std::uint64_t len = text.size();
  char len_bytes[8];
  std::memcpy(len_bytes, &len, 8);
  out.append(len_bytes, 8);
  out += text;
  out += blob;
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < 16 || bytes.substr(0, kMagic.size()) != kMagic) corrupt("bad magic");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 8);
  if (len > bytes.size() - 16) corrupt("header length exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, len));
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("header is not valid JSON: ") + e.what());
  }
  const std::string_view blob = bytes.substr(16 + len);

  Checkpoint ckpt;
  try {
    if (header.at("format") != "geomshot-checkpoint" || header.at("version") != 1)
      corrupt("unsupported container format");
    const auto& enc = header.at("encoder");
    ckpt.encoder.input_dim = enc.at("input_dim").get<int>();
    ckpt.encoder.hidden_dim = enc.at("hidden_dim").get<int>();
    ckpt.encoder.num_hidden = enc.at("num_hidden").get<int>();
    ckpt.encoder.embed_dim = enc.at("embed_dim").get<int>();
    ckpt.encoder.dropout = enc.at("dropout").get<double>();
    ckpt.metadata = header.at("metadata").get<std::map<std::string, std::string>>();
    const auto blob_size = header.at("blob_size").get<std::uint64_t>();
    if (blob_size != blob.size())
      corrupt("blob is " + std::to_string(blob.size()) + " bytes, header declares " +
              std::to_string(blob_size));
    std::uint64_t expected_offset = 0;
    for (const auto& entry : header.at("tensors")) {
      if (entry.at("dtype") != "f8") corrupt("unsupported dtype");
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      if (shape.empty() || shape.size() > 2) corrupt("unsupported tensor rank");
      const auto offset = entry.at("byte_offset").get<std::uint64_t>();
      if (offset != expected_offset) corrupt("tensor offsets are not contiguous");
      const std::string name = entry.at("name").get<std::string>();
      const bool trainable =
          !(name.ends_with(".running_mean") || name.ends_with(".running_var"));
      ParamTensor t(name, shape, trainable);
      const auto count = static_cast<std::uint64_t>(t.value.size());
      if (offset + 8 * count > blob.size()) corrupt("tensor '" + name + "' overruns the blob");
      std::uint64_t k = 0;
      for (Eigen::Index r = 0; r < t.value.rows(); ++r)
        for (Eigen::Index c = 0; c < t.value.cols(); ++c, ++k) {
          double v;
          std::memcpy(&v, blob.data() + offset + 8 * k, 8);
          t.value(r, c) = v;
        }
      expected_offset = offset + 8 * count;
      ckpt.tensors.push_back(std::move(t));
    }
    if (expected_offset != blob.size()) corrupt("blob has trailing bytes");
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("header schema: ") + e.what());
  }
  try {
    ckpt.encoder.validate();
    (void)encoder_from_checkpoint(ckpt);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptCheckpoint) throw;
    corrupt(e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace geomshot::nnet
