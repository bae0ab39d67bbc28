#include "idea/error.hpp"

namespace idea {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kDegenerateRow: return "degenerate-row";
    case ErrorCode::kCardinality: return "cardinality";
    case ErrorCode::kLabel: return "label";
    case ErrorCode::kInvariant: return "invariant";
    case ErrorCode::kStateCorruption: return "state-corruption";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kInput: return "input";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message, std::optional<std::uint64_t> byte_offset)
    : std::runtime_error(Compose(code, "", message, byte_offset)),
      code_(code),
      detail_(message),
      byte_offset_(byte_offset) {}

Error Error::WithStage(const std::string& stage) const {
  Error tagged(code_, detail_, byte_offset_);
  tagged.stage_ = stage;
  static_cast<std::runtime_error&>(tagged) =
      std::runtime_error(Compose(code_, stage, detail_, byte_offset_));
  return tagged;
}

std::string Error::Compose(ErrorCode code, const std::string& stage, const std::string& detail,
                           const std::optional<std::uint64_t>& byte_offset) {
  std::string out;
  if (!stage.empty()) out += "[" + stage + "] ";
  out += ErrorCodeName(code);
  out += " error: ";
  out += detail;
  if (byte_offset) out += " (at byte offset " + std::to_string(*byte_offset) + ")";
  return out;
}

}  // namespace idea
