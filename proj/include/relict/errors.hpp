#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace relict {

enum class ErrorCode {
  format,
  dimension,
  data,
  window,
  degenerate_input,
  range,
  input,
  corpus,
  incomplete_ratings,
  degenerate_labels,
  io,
  config,
};

std::string_view error_code_name(ErrorCode code);

// Base of every error raised by the toolkit. The code identifies the failure
// class independently of the C++ type so it can cross process boundaries
// (CLI exit codes, JSON error bodies).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

template <ErrorCode C>
class CodedError : public Error {
 public:
  explicit CodedError(const std::string& message) : Error(C, message) {}
};

using FormatError = CodedError<ErrorCode::format>;
using DimensionError = CodedError<ErrorCode::dimension>;
using DataError = CodedError<ErrorCode::data>;
using WindowError = CodedError<ErrorCode::window>;
using DegenerateInputError = CodedError<ErrorCode::degenerate_input>;
using RangeError = CodedError<ErrorCode::range>;
using InputError = CodedError<ErrorCode::input>;
using CorpusError = CodedError<ErrorCode::corpus>;
using IncompleteRatingsError = CodedError<ErrorCode::incomplete_ratings>;
using DegenerateLabelsError = CodedError<ErrorCode::degenerate_labels>;
using IoError = CodedError<ErrorCode::io>;
using ConfigError = CodedError<ErrorCode::config>;

// Throws an error of the same concrete type as `e` with `context` prepended
// to its message.
[[noreturn]] void rethrow_with_context(const Error& e, std::string_view context);

}  // namespace relict
