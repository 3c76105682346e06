#include "spanclean/checkpoint.h"

#include <bit>
#include <cstring>

#include <nlohmann/json.hpp>

#include "spanclean/config.h"
#include "spanclean/errors.h"

namespace spanclean {

namespace {

constexpr char kMagic[8] = {'S', 'P', 'C', 'L', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void Append(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T Take(std::string_view bytes, size_t& pos) {
  if (bytes.size() - pos < sizeof(T)) throw DataError("checkpoint truncated");
  T value;
  std::memcpy(&value, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

std::string SerializeCheckpoint(const Checkpoint& ck) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : ck.params.tensors()) {
    tensors.push_back({{"name", std::string(t.name)}, {"rows", t.rows}, {"cols", t.cols}});
  }
  nlohmann::json header{{"model", ModelConfigToJson(ck.config)},
                        {"seed", ck.seed},
                        {"epoch", ck.epoch},
                        {"lowercase", ck.vocabulary.lowercase()},
                        {"vocabulary", ck.vocabulary.tokens()},
                        {"labels", ck.labels.entity_types()},
                        {"tensors", tensors}};
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  Append<uint32_t>(out, kVersion);
  Append<uint64_t>(out, text.size());
  out += text;
  for (const auto& t : ck.params.tensors()) {
    const auto values = t.values();
    out.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
  }
  return out;
}

Checkpoint DeserializeCheckpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  size_t pos = sizeof(kMagic);
  const auto version = Take<uint32_t>(bytes, pos);
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = Take<uint64_t>(bytes, pos);
  if (bytes.size() - pos < header_len) throw DataError("checkpoint truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad checkpoint header: ") + e.what());
  }
  pos += header_len;

  Checkpoint ck;
  try {
    ck.config = ModelConfigFromJson(header.at("model"));
    ck.seed = header.at("seed").get<uint64_t>();
    ck.epoch = header.at("epoch").get<int>();
    ck.vocabulary = Vocabulary::FromTokens(header.at("vocabulary").get<std::vector<std::string>>(),
                                           header.at("lowercase").get<bool>());
    ck.labels = LabelSet(header.at("labels").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("bad checkpoint header: ") + e.what());
  }
  ck.config.Validate();
  ck.params = SpanClassifierParams::Zeros(ck.config);
  const auto& declared = header.at("tensors");
  auto views = ck.params.tensors();
  if (declared.size() != views.size()) throw DataError("checkpoint tensor count mismatch");
  for (size_t i = 0; i < views.size(); ++i) {
    const auto& d = declared[i];
    if (d.at("name").get<std::string>() != views[i].name ||
        d.at("rows").get<Eigen::Index>() != views[i].rows ||
        d.at("cols").get<Eigen::Index>() != views[i].cols) {
      throw DataError("checkpoint tensor " + std::to_string(i) + " does not match the config");
    }
    const auto values = views[i].values();
    if (bytes.size() - pos < values.size_bytes()) throw DataError("checkpoint truncated");
    std::memcpy(values.data(), bytes.data() + pos, values.size_bytes());
    pos += values.size_bytes();
  }
  if (pos != bytes.size()) throw DataError("trailing bytes after checkpoint tensors");
  return ck;
}

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  WriteTextFile(path, SerializeCheckpoint(checkpoint));
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  return DeserializeCheckpoint(ReadTextFile(path));
}

}  // namespace spanclean
