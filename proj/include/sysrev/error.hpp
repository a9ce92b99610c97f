#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sysrev {

enum class ErrorCode {
  kInput,
  kNotFound,
  kDuplicate,
  kIngestion,
  kParse,
  kSyntax,
  kStructural,
  kTransport,
  kRemote,
  kProvider,
  kCassetteMiss,
  kDimension,
  kEmptyIndex,
  kEmptyContext,
  kGeneration,
  kConflict,
  kReference,
  kStorage,
  kConfig,
};

/// Stable lowercase identifier used in JSON error bodies and CLI output.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Error carrying a byte/character offset into the input that failed.
class OffsetError : public Error {
 public:
  OffsetError(ErrorCode code, const std::string& message, std::size_t offset)
      : Error(code, message + " (at offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class CassetteMiss : public Error {
 public:
  explicit CassetteMiss(const std::string& fingerprint)
      : Error(ErrorCode::kCassetteMiss, "no cassette entry for fingerprint " + fingerprint),
        fingerprint_(fingerprint) {}

  const std::string& fingerprint() const noexcept { return fingerprint_; }

 private:
  std::string fingerprint_;
};

/// A pipeline stage failed; wraps the cause with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, ErrorCode cause, const std::string& message)
      : Error(cause, stage + ": " + message), stage_(std::move(stage)), cause_message_(message) {}

  const std::string& stage() const noexcept { return stage_; }
  const std::string& cause_message() const noexcept { return cause_message_; }

 private:
  std::string stage_;
  std::string cause_message_;
};

}  // namespace sysrev
