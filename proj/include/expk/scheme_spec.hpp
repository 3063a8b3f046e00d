#pragma once

#include <string>

#include "expk/errors.hpp"

namespace expk {

enum class Family { expk, exp4, erow4 };
enum class Variant { standard, ktype, sp };

// Basis-size control for the adaptive (standard) variants.
struct AdaptiveSpec {
  int m_min = 1;
  int m_max = 100;
  double tol = 1e-10;
};

// Identifies one of the shipped time-stepping schemes. expk is single
// projection by construction and ignores the variant field.
struct SchemeSpec {
  Family family = Family::expk;
  Variant variant = Variant::ktype;
  int M = 4;               // fixed Krylov dimension (expk, ktype, sp)
  AdaptiveSpec adaptive{}; // standard variants

  std::string id() const {
    switch (family) {
      case Family::expk:
        return "expk";
      case Family::exp4:
      case Family::erow4: {
        std::string base = (family == Family::exp4) ? "exp4" : "erow4";
        switch (variant) {
          case Variant::standard:
            return base;
          case Variant::ktype:
            return base + "k";
          case Variant::sp:
            return base + "sp";
        }
        break;
      }
    }
    throw scheme_error("scheme id: unknown family/variant");
  }
};

inline std::string family_name(Family f) {
  switch (f) {
    case Family::expk:
      return "expk";
    case Family::exp4:
      return "exp4";
    case Family::erow4:
      return "erow4";
  }
  throw scheme_error("family name: unknown family");
}

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::standard:
      return "standard";
    case Variant::ktype:
      return "ktype";
    case Variant::sp:
      return "sp";
  }
  throw scheme_error("variant name: unknown variant");
}

inline Family parse_family(const std::string& name) {
  if (name == "expk") return Family::expk;
  if (name == "exp4") return Family::exp4;
  if (name == "erow4") return Family::erow4;
  throw scheme_error("unknown method '" + name + "' (expk, exp4, erow4)");
}

inline Variant parse_variant(const std::string& name) {
  if (name == "standard") return Variant::standard;
  if (name == "ktype") return Variant::ktype;
  if (name == "sp") return Variant::sp;
  throw scheme_error("unknown variant '" + name +
                     "' (standard, ktype, sp)");
}

// Inverse of SchemeSpec::id(): expk, exp4, exp4k, exp4sp, erow4, erow4k,
// erow4sp. M and the adaptive controls keep their defaults.
inline SchemeSpec parse_scheme_id(const std::string& id) {
  SchemeSpec s;
  auto match = [&](const std::string& base, Family f) {
    if (id == base) {
      s.family = f;
      s.variant = (f == Family::expk) ? Variant::ktype : Variant::standard;
      return true;
    }
    if (id == base + "k") {
      s.family = f;
      s.variant = Variant::ktype;
      return true;
    }
    if (id == base + "sp") {
      s.family = f;
      s.variant = Variant::sp;
      return true;
    }
    return false;
  };
  if (match("expk", Family::expk) && id == "expk") return s;
  if (match("exp4", Family::exp4)) return s;
  if (match("erow4", Family::erow4)) return s;
  throw scheme_error("unknown scheme id '" + id +
                     "' (expk, exp4[,k,sp], erow4[,k,sp])");
}

}  // namespace expk
