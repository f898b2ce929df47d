#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace aita {

std::string sha256_hex(std::string_view data);

/// 64-bit FNV-1a. Used where a fast, portable, non-cryptographic hash is part of a
/// reproducible contract (mock embedder buckets).
std::uint64_t fnv1a64(std::string_view data);

/// Cryptographically random bytes rendered as unpadded base64url.
std::string random_urlsafe_token(std::size_t n_bytes = 16);

}  // namespace aita
