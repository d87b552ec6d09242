#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vcat {

/// Hex-encoded SHA-256 of a byte buffer.
std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_hex(const std::vector<float>& v);

/// Hash of a file's raw contents; throws on IO failure.
std::string sha256_file(const std::string& path);

}  // namespace vcat
