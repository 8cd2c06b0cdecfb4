#pragma once

#include "cm/canonical.hpp"
#include "cm/error.hpp"

#include <optional>
#include <string>

namespace cm {

/// Reads a required member; any absence or type mismatch becomes InvalidRequest.
template <typename T>
T field(const Json& j, const char* key) {
    if (!j.is_object()) fail(ErrorCode::InvalidRequest, std::string("expected object holding '") + key + "'");
    auto it = j.find(key);
    if (it == j.end()) fail(ErrorCode::InvalidRequest, std::string("missing field '") + key + "'");
    try {
        return it->template get<T>();
    } catch (const Json::exception& e) {
        fail(ErrorCode::InvalidRequest, std::string("bad field '") + key + "': " + e.what());
    }
}

template <typename T>
std::optional<T> optional_field(const Json& j, const char* key) {
    if (!j.is_object()) fail(ErrorCode::InvalidRequest, std::string("expected object holding '") + key + "'");
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    try {
        return it->template get<T>();
    } catch (const Json::exception& e) {
        fail(ErrorCode::InvalidRequest, std::string("bad field '") + key + "': " + e.what());
    }
}

template <typename T>
T field_or(const Json& j, const char* key, T fallback) {
    auto v = optional_field<T>(j, key);
    return v ? std::move(*v) : std::move(fallback);
}

template <typename T>
void put_optional(Json& j, const char* key, const std::optional<T>& v) {
    if (v) j[key] = *v;
}

} // namespace cm
