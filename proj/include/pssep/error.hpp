#pragma once

#include <stdexcept>
#include <string>

namespace pssep {

// Raised for invalid inputs and numerical failures anywhere in the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(message);
}

}  // namespace pssep
