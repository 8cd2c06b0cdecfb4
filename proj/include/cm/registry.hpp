#pragma once

#include "cm/types.hpp"

#include <map>
#include <span>
#include <vector>

namespace cm {

/// The six built-in interaction types plus any custom ones registered at run
/// time. Built-ins cannot be replaced.
class TypeRegistry {
public:
    static std::span<const NotificationTypeSpec> builtins();
    static bool is_builtin(const TypeCode& code);

    /// Throws InvalidSpec if the spec breaks a type invariant.
    static void validate(const NotificationTypeSpec& spec);

    const NotificationTypeSpec* find(const TypeCode& code) const;

    /// Throws CodeCollision for a built-in or already registered code.
    void check_insertable(const NotificationTypeSpec& spec) const;
    void insert(const NotificationTypeSpec& spec);

    const std::map<TypeCode, NotificationTypeSpec>& custom() const { return custom_; }
    std::vector<NotificationTypeSpec> all() const;

    friend bool operator==(const TypeRegistry&, const TypeRegistry&) = default;

private:
    std::map<TypeCode, NotificationTypeSpec> custom_;
};

} // namespace cm
