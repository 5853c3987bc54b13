#include "ahf/errors.hpp"

namespace ahf {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Input: return "input error";
    case ErrorKind::Structural: return "structural error";
    case ErrorKind::Parameter: return "parameter error";
    case ErrorKind::Protocol: return "protocol error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Config: return "configuration error";
  }
  return "error";
}

}  // namespace ahf
