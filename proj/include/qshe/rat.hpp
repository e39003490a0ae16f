#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <sstream>
#include <string>

namespace qshe {

using Rat = boost::multiprecision::cpp_rational;

inline std::string rat_str(const Rat& r) {
  std::ostringstream os;
  os << r;
  return os.str();
}

inline Rat rat_parse(const std::string& s) { return Rat(s); }

} // namespace qshe
