#pragma once

#include <stdexcept>
#include <string>

namespace flownp {

/// Invalid or inconsistent configuration (bad key, bad value, missing artifact).
struct config_error : std::runtime_error {
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// Numeric failure at runtime (Cholesky breakdown, non-finite state, NaN loss).
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace flownp
