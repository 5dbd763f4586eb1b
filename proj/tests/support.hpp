#pragma once

#include <doctest.h>

#include <functional>

#include "bbf/error.hpp"

// Kind of the bbf::Error thrown by f; fails the test when nothing is thrown.
inline bbf::ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const bbf::Error& e) {
    return e.kind();
  }
  FAIL("no exception");
  return bbf::ErrorKind::Io;
}
