#pragma once

#include <string>

#include "tar/common.hpp"

namespace tar {

// Binary class label. The integer encoding is load-bearing: the
// activation loss uses the label value arithmetically, and files persist
// these exact integers.
enum class Label : int {
  real = 1,
  fake = 2,
};

inline int label_value(Label l) { return static_cast<int>(l); }

inline Label label_from_int(int v) {
  if (v == 1) return Label::real;
  if (v == 2) return Label::fake;
  throw ContractError("invalid label " + std::to_string(v) + ", expected 1 (real) or 2 (fake)");
}

inline const char* label_name(Label l) { return l == Label::real ? "real" : "fake"; }

inline Label label_from_name(const std::string& name) {
  if (name == "real") return Label::real;
  if (name == "fake") return Label::fake;
  throw ContractError("invalid label '" + name + "', expected real or fake");
}

}  // namespace tar
