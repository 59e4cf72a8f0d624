#pragma once

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>

namespace tgd {

/// 64-bit FNV-1a. Used as a content fingerprint for networks, tensors and files,
/// not as a cryptographic digest.
class Fnv1a {
public:
    void update(const void* bytes, std::size_t n) noexcept {
        const auto* p = static_cast<const unsigned char*>(bytes);
        for (std::size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ULL;
        }
    }
    void update(std::string_view s) noexcept { update(s.data(), s.size()); }
    template <class T>
    void update(std::span<const T> values) noexcept {
        update(values.data(), values.size_bytes());
    }
    template <class T>
    void update_value(const T& v) noexcept {
        update(&v, sizeof(T));
    }

    std::uint64_t digest() const noexcept { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string hex_digest(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace tgd
