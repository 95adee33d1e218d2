#pragma once

#include <filesystem>
#include <vector>

#include "keynet/keys.hpp"

namespace keynet::keys {

// A key on disk is a directory:
//   key.json      {"format": "keynet-key", "version": 1, "dim", "alpha",
//                  "seed", "has_bias", "forward": {"file", "sha256"},
//                  "inverse": {"file", "sha256"}}
//   forward.kspm  inverse.kspm
void save_key(const std::filesystem::path& dir, const KeyMatrix& k);
// Verifies both digests; IntegrityError on mismatch.
KeyMatrix load_key(const std::filesystem::path& dir);

}  // namespace keynet::keys
