#include "cm/canonical.hpp"

#include "cm/error.hpp"

#include <openssl/sha.h>
#include <zlib.h>

#include <array>
#include <cstdio>

namespace cm {

std::string canonical(const Json& value) {
    // nlohmann::json objects are std::map-backed, so dump() is already key-sorted.
    return value.dump(-1, ' ', false, Json::error_handler_t::strict);
}

Json parse_json(std::string_view text) {
    try {
        return Json::parse(text.begin(), text.end());
    } catch (const Json::exception& e) {
        fail(ErrorCode::InvalidRequest, std::string("malformed json: ") + e.what());
    }
}

std::uint32_t crc32_of(std::string_view bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

std::string crc32_hex(std::string_view bytes) {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", crc32_of(bytes));
    return buf;
}

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, SHA256_DIGEST_LENGTH> md{};
    SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), md.data());
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(md.size() * 2);
    for (unsigned char b : md) {
        out.push_back(kHex[b >> 4]);
        out.push_back(kHex[b & 0xf]);
    }
    return out;
}

} // namespace cm
