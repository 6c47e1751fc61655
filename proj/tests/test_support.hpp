#pragma once

#include <doctest.h>

#include <functional>
#include <optional>

#include "nbhd/error.hpp"

namespace nbhd::testing {

/// Kind of the nbhd::Error thrown by f, or nullopt when f returns normally.
inline std::optional<ErrorKind> kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace nbhd::testing
