#pragma once

#include <string>
#include <string_view>

namespace nvdnp {

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

/// Git blob object id: SHA-1 over "blob <size>\0<content>", lowercase hex.
std::string git_blob_hash(std::string_view content);

}  // namespace nvdnp
