#pragma once

#include <string>
#include <string_view>

namespace nncert {

/// %.17g: round-trips every finite double.
std::string format_double(double v);

/// Throw Error(Io) on failure.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace nncert
