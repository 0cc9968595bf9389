#include <cstdio>

#include "hilnas/error.hpp"
#include "hilnas/rng.hpp"

namespace hilnas {

const char* error_kind_name(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Validation: return "validation";
        case ErrorKind::Conflict: return "conflict";
        case ErrorKind::StaleState: return "stale_state";
        case ErrorKind::NotFound: return "not_found";
        case ErrorKind::Evaluation: return "evaluation";
        case ErrorKind::Corrupt: return "corrupt";
    }
    return "unknown";
}

std::string hex_digest(std::span<const unsigned char> bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string hex_digest(std::string_view text) {
    return hex_digest(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

} // namespace hilnas
