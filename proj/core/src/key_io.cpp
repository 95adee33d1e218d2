#include "keynet/key_io.hpp"

#include <fstream>

#include <json.hpp>

#include "keynet/errors.hpp"
#include "keynet/hash.hpp"
#include "keynet/kspm_io.hpp"

namespace keynet::keys {

namespace fs = std::filesystem;
using nlohmann::json;

void save_key(const fs::path& dir, const KeyMatrix& k) {
  fs::create_directories(dir);
  const std::string fwd = sparse::encode_kspm(k.forward());
  const std::string inv = sparse::encode_kspm(k.inverse());
  sparse::write_file_bytes(dir / "forward.kspm", fwd);
  sparse::write_file_bytes(dir / "inverse.kspm", inv);
  json j;
  j["format"] = "keynet-key";
  j["version"] = 1;
  j["dim"] = k.dim();
  j["alpha"] = k.alpha();
  j["seed"] = k.seed();
  j["has_bias"] = k.has_bias();
  j["forward"] = {{"file", "forward.kspm"}, {"sha256", sha256_hex(fwd)}};
  j["inverse"] = {{"file", "inverse.kspm"}, {"sha256", sha256_hex(inv)}};
  sparse::write_file_bytes(dir / "key.json", j.dump(2) + "\n");
}

KeyMatrix load_key(const fs::path& dir) {
  json j;
  try {
    j = json::parse(sparse::read_file_bytes(dir / "key.json"));
  } catch (const json::exception& e) {
    throw FormatError("key.json: " + std::string(e.what()));
  }
  if (j.value("format", "") != "keynet-key")
    throw FormatError(dir.string() + " is not a keynet key directory");
  auto blob = [&](const char* name) {
    const auto& entry = j.at(name);
    const std::string bytes =
        sparse::read_file_bytes(dir / entry.at("file").get<std::string>());
    if (sha256_hex(bytes) != entry.at("sha256").get<std::string>())
      throw IntegrityError("key " + dir.string() + ": " + name +
                           " blob digest mismatch");
    return sparse::decode_kspm(bytes);
  };
  try {
    return KeyMatrix(j.at("dim").get<std::size_t>(),
                     j.at("alpha").get<std::size_t>(),
                     j.at("seed").get<std::uint64_t>(),
                     j.at("has_bias").get<bool>(), blob("forward"),
                     blob("inverse"));
  } catch (const json::exception& e) {
    throw FormatError("key.json: " + std::string(e.what()));
  }
}

}  // namespace keynet::keys
