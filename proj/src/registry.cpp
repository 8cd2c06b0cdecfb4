#include "cm/registry.hpp"

#include "cm/error.hpp"

#include <algorithm>
#include <array>

namespace cm {

namespace {

const std::array<NotificationTypeSpec, 6> kBuiltins = {{
    {"T1", Role::Expert, Audience::OtherExperts, false, false},
    {"T2", Role::Expert, Audience::Patient, true, true},
    {"T3", Role::Expert, Audience::Patient, false, true},
    {"T4", Role::Expert, Audience::Patient, false, false},
    {"T5", Role::EndUser, Audience::AllExperts, false, false},
    {"T6", Role::EndUser, Audience::AllExperts, false, false},
}};

bool valid_code(const TypeCode& code) {
    if (code.empty() || code.size() > 64) return false;
    return std::all_of(code.begin(), code.end(), [](char c) {
        return c > 0x20 && c < 0x7f && c != '/' && c != '"';
    });
}

} // namespace

std::span<const NotificationTypeSpec> TypeRegistry::builtins() { return kBuiltins; }

bool TypeRegistry::is_builtin(const TypeCode& code) {
    return std::any_of(kBuiltins.begin(), kBuiltins.end(), [&](const auto& s) { return s.code == code; });
}

void TypeRegistry::validate(const NotificationTypeSpec& spec) {
    if (!valid_code(spec.code)) fail(ErrorCode::InvalidSpec, "type code must be 1-64 printable ASCII characters");
    if (spec.requires_approval) {
        if (spec.origin_role != Role::Expert) {
            fail(ErrorCode::InvalidSpec, "approval is only defined for expert-originated types");
        }
        if (spec.audience != Audience::Patient || !spec.patient_visible) {
            fail(ErrorCode::InvalidSpec, "approval-gated types must target a visible patient audience");
        }
    }
    if (spec.patient_visible && spec.audience != Audience::Patient) {
        fail(ErrorCode::InvalidSpec, "patient_visible requires the Patient audience");
    }
    if (spec.audience == Audience::Patient && spec.origin_role != Role::Expert) {
        fail(ErrorCode::InvalidSpec, "only experts address the patient");
    }
}

const NotificationTypeSpec* TypeRegistry::find(const TypeCode& code) const {
    for (const auto& s : kBuiltins) {
        if (s.code == code) return &s;
    }
    auto it = custom_.find(code);
    return it == custom_.end() ? nullptr : &it->second;
}

void TypeRegistry::check_insertable(const NotificationTypeSpec& spec) const {
    if (find(spec.code)) fail(ErrorCode::CodeCollision, "type code '" + spec.code + "' already exists");
    validate(spec);
}

void TypeRegistry::insert(const NotificationTypeSpec& spec) {
    check_insertable(spec);
    custom_.emplace(spec.code, spec);
}

std::vector<NotificationTypeSpec> TypeRegistry::all() const {
    std::vector<NotificationTypeSpec> out(kBuiltins.begin(), kBuiltins.end());
    for (const auto& [_, s] : custom_) out.push_back(s);
    return out;
}

} // namespace cm
