#include "cascade/keccak.hpp"

#include <cstring>

namespace cascade {
namespace {

constexpr std::array<std::uint64_t, 24> kRoundConstants = {
    0x0000000000000001ULL, 0x0000000000008082ULL, 0x800000000000808aULL,
    0x8000000080008000ULL, 0x000000000000808bULL, 0x0000000080000001ULL,
    0x8000000080008081ULL, 0x8000000000008009ULL, 0x000000000000008aULL,
    0x0000000000000088ULL, 0x0000000080008009ULL, 0x000000008000000aULL,
    0x000000008000808bULL, 0x800000000000008bULL, 0x8000000000008089ULL,
    0x8000000000008003ULL, 0x8000000000008002ULL, 0x8000000000000080ULL,
    0x000000000000800aULL, 0x800000008000000aULL, 0x8000000080008081ULL,
    0x8000000000008080ULL, 0x0000000080000001ULL, 0x8000000080008008ULL};

constexpr std::array<int, 24> kRotations = {1,  3,  6,  10, 15, 21, 28, 36,
                                            45, 55, 2,  14, 27, 41, 56, 8,
                                            25, 43, 62, 18, 39, 61, 20, 44};

constexpr std::array<int, 24> kPiLanes = {10, 7,  11, 17, 18, 3,  5,  16,
                                          8,  21, 24, 4,  15, 23, 19, 13,
                                          12, 2,  20, 14, 22, 9,  6,  1};

inline std::uint64_t rotl(std::uint64_t x, int s) { return (x << s) | (x >> (64 - s)); }

void keccak_f(std::array<std::uint64_t, 25>& st) {
    for (std::uint64_t rc : kRoundConstants) {
        std::uint64_t bc[5];
        for (int i = 0; i < 5; ++i)
            bc[i] = st[i] ^ st[i + 5] ^ st[i + 10] ^ st[i + 15] ^ st[i + 20];
        for (int i = 0; i < 5; ++i) {
            std::uint64_t t = bc[(i + 4) % 5] ^ rotl(bc[(i + 1) % 5], 1);
            for (int j = 0; j < 25; j += 5) st[j + i] ^= t;
        }
        std::uint64_t t = st[1];
        for (int i = 0; i < 24; ++i) {
            int j = kPiLanes[i];
            std::uint64_t tmp = st[j];
            st[j] = rotl(t, kRotations[i]);
            t = tmp;
        }
        for (int j = 0; j < 25; j += 5) {
            for (int i = 0; i < 5; ++i) bc[i] = st[j + i];
            for (int i = 0; i < 5; ++i) st[j + i] ^= (~bc[(i + 1) % 5]) & bc[(i + 2) % 5];
        }
        st[0] ^= rc;
    }
}

} // namespace

Digest256 keccak256(std::string_view data) {
    constexpr std::size_t rate = 136;
    std::array<std::uint64_t, 25> st{};
    auto absorb = [&](const std::uint8_t* block) {
        for (std::size_t i = 0; i < rate / 8; ++i) {
            std::uint64_t lane = 0;
            for (int b = 0; b < 8; ++b) lane |= std::uint64_t(block[i * 8 + b]) << (8 * b);
            st[i] ^= lane;
        }
        keccak_f(st);
    };

    const auto* p = reinterpret_cast<const std::uint8_t*>(data.data());
    std::size_t n = data.size();
    while (n >= rate) {
        absorb(p);
        p += rate;
        n -= rate;
    }
    std::uint8_t last[rate] = {};
    std::memcpy(last, p, n);
    last[n] ^= 0x01;
    last[rate - 1] ^= 0x80;
    absorb(last);

    Digest256 out{};
    for (std::size_t i = 0; i < 32; ++i) out[i] = std::uint8_t(st[i / 8] >> (8 * (i % 8)));
    return out;
}

std::string to_hex(const std::uint8_t* data, std::size_t n) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    s.reserve(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
        s.push_back(digits[data[i] >> 4]);
        s.push_back(digits[data[i] & 0xf]);
    }
    return s;
}

std::string selector_of(std::string_view canonical_signature) {
    auto d = keccak256(canonical_signature);
    return "0x" + to_hex(d.data(), 4);
}

std::string short_hash(std::string_view data, std::size_t hex_chars) {
    auto d = keccak256(data);
    return to_hex(d.data(), d.size()).substr(0, hex_chars);
}

} // namespace cascade
