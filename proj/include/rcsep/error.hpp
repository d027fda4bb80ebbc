#pragma once

#include <stdexcept>
#include <string>

namespace rcsep {

// Every failure carries the name of the module that raised it.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

inline void require(bool ok, const char* module, const std::string& what) {
  if (!ok) throw Error(module, what);
}

}  // namespace rcsep
