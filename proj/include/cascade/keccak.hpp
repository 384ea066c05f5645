#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace cascade {

using Digest256 = std::array<std::uint8_t, 32>;

/// Ethereum-flavoured Keccak-256 (original padding 0x01, not FIPS-202 SHA3).
Digest256 keccak256(std::string_view data);

std::string to_hex(const std::uint8_t* data, std::size_t n);

/// "0x" + first four digest bytes of the signature text.
std::string selector_of(std::string_view canonical_signature);

/// First `hex_chars` lowercase hex characters of keccak256(data).
std::string short_hash(std::string_view data, std::size_t hex_chars = 8);

} // namespace cascade
