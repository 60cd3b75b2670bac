#include "sgplvm/kernels.hpp"

namespace sgplvm {

std::string to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::ArdRbf:
      return "ard_rbf";
    case KernelFamily::Matern32:
      return "matern32";
    case KernelFamily::White:
      return "white";
  }
  return "unknown";
}

KernelFamily kernel_family_from_string(const std::string &name) {
  if (name == "ard_rbf" || name == "rbf") return KernelFamily::ArdRbf;
  if (name == "matern32") return KernelFamily::Matern32;
  if (name == "white") return KernelFamily::White;
  throw ConfigError("unknown kernel family '" + name + "'");
}

}  // namespace sgplvm
