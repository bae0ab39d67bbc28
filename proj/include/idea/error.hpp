#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace idea {

enum class ErrorCode {
  kFormat,
  kIo,
  kShape,
  kDegenerateRow,
  kCardinality,
  kLabel,
  kInvariant,
  kStateCorruption,
  kDivergence,
  kInput,
};

const char* ErrorCodeName(ErrorCode code);

/// Exception carried by every failing operation in the library.
///
/// Format errors record the byte offset at which decoding failed. Errors that
/// cross the experiment runner pick up a stage tag ("load", "cache", ...) so
/// CLI diagnostics can say where a run broke.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::uint64_t> byte_offset = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  const std::optional<std::uint64_t>& byte_offset() const noexcept { return byte_offset_; }
  const std::string& stage() const noexcept { return stage_; }

  /// Copy of this error tagged with a pipeline stage.
  Error WithStage(const std::string& stage) const;

 private:
  static std::string Compose(ErrorCode code, const std::string& stage, const std::string& detail,
                             const std::optional<std::uint64_t>& byte_offset);

  ErrorCode code_;
  std::string detail_;
  std::optional<std::uint64_t> byte_offset_;
  std::string stage_;
};

}  // namespace idea
