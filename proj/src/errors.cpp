#include "neurodecode/errors.hpp"

namespace neurodecode {

const char* to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::io: return "io error";
    case FormatErrorKind::bad_magic: return "bad magic";
    case FormatErrorKind::version_mismatch: return "version mismatch";
    case FormatErrorKind::unsupported_dtype: return "unsupported dtype";
    case FormatErrorKind::truncated_payload: return "truncated payload";
    case FormatErrorKind::length_mismatch: return "length mismatch";
    case FormatErrorKind::bad_manifest: return "bad manifest";
  }
  return "format error";
}

}  // namespace neurodecode
