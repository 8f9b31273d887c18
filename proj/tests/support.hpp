#pragma once

#include <catch2/catch_amalgamated.hpp>

#include "regulus/errors.hpp"

// Catch2 matcher for the library's typed errors: asserts the code, not the
// message text.
struct ErrorMatcher : Catch::Matchers::MatcherBase<regulus::Error> {
  regulus::Errc expected;
  explicit ErrorMatcher(regulus::Errc e) : expected(e) {}
  bool match(const regulus::Error& e) const override { return e.code() == expected; }
  std::string describe() const override {
    return "has error code " + std::string(regulus::to_string(expected));
  }
};
