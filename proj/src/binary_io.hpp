#pragma once

// Little-endian scalar IO shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "bayesrisk/errors.hpp"

namespace bayesrisk::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& what) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ParseError(what + " truncated");
    return v;
}

inline bool at_eof(std::istream& in) { return in.peek() == std::char_traits<char>::eof(); }

}  // namespace bayesrisk::detail
