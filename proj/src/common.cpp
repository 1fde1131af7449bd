#include "clknn/common.hpp"

namespace clknn {

const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::io: return "io";
    case ErrorKind::contract: return "contract";
    }
    return "unknown";
}

} // namespace clknn
