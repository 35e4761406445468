#include "cokv/status.h"

namespace cokv {

std::string Status::ToString() const {
  const char* name = "OK";
  switch (code_) {
    case Code::kOk:
      return "OK";
    case Code::kNotFound:
      name = "NotFound";
      break;
    case Code::kCorruption:
      name = "Corruption";
      break;
    case Code::kIOError:
      name = "IO error";
      break;
    case Code::kInvalidArgument:
      name = "Invalid argument";
      break;
    case Code::kProtocol:
      name = "Protocol error";
      break;
    case Code::kTimeout:
      name = "Timeout";
      break;
    case Code::kAborted:
      name = "Aborted";
      break;
  }
  std::string out = name;
  if (!msg_.empty()) {
    out += ": ";
    out += msg_;
  }
  return out;
}

}  // namespace cokv
