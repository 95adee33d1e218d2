#pragma once

#include <filesystem>
#include <optional>

#include "keynet/keyed.hpp"

namespace keynet::keyed {

// Keynet container directory:
//   manifest.json  {"format": "keynet-keyed", "version": 1, "alpha",
//                   "fingerprint", "input_shape", "output_shape",
//                   "layers": [{"kind": "linear"|"relu", "in_shape",
//                               "out_shape", "encoding": "kspm"|"kstm",
//                               "file", "sha256"}]}
//   layer_NNN.kspm (or layer_NNN.kstm when tile_size is given)
// No key material is ever written here.
void save_keynet(const std::filesystem::path& dir, const KeyedNetwork& kn,
                 std::optional<std::size_t> tile_size = std::nullopt);

// Verifies every layer digest; IntegrityError names the first bad layer.
KeyedNetwork load_keynet(const std::filesystem::path& dir);

// Key chain directory (secret): chain.json plus one key directory per
// boundary (key_000, key_001, ...).
void save_chain(const std::filesystem::path& dir, const KeyChain& chain);
KeyChain load_chain(const std::filesystem::path& dir);

}  // namespace keynet::keyed
