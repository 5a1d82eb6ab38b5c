#include "kasimp/error.hpp"

namespace kas {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kIndex: return "index error";
    case ErrorKind::kContract: return "contract violation";
    case ErrorKind::kCorpus: return "corpus error";
    case ErrorKind::kAnnotation: return "annotation error";
    case ErrorKind::kAlignment: return "alignment error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kIo: return "I/O error";
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kCheck: return "invalid gradient check";
  }
  return "error";
}

}  // namespace kas
