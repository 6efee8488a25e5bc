#include "relict/errors.hpp"

#include <fmt/format.h>

namespace relict {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::format: return "FormatError";
    case ErrorCode::dimension: return "DimensionError";
    case ErrorCode::data: return "DataError";
    case ErrorCode::window: return "WindowError";
    case ErrorCode::degenerate_input: return "DegenerateInputError";
    case ErrorCode::range: return "RangeError";
    case ErrorCode::input: return "InputError";
    case ErrorCode::corpus: return "CorpusError";
    case ErrorCode::incomplete_ratings: return "IncompleteRatingsError";
    case ErrorCode::degenerate_labels: return "DegenerateLabelsError";
    case ErrorCode::io: return "IoError";
    case ErrorCode::config: return "ConfigError";
  }
  return "Error";
}

void rethrow_with_context(const Error& e, std::string_view context) {
  const std::string msg = fmt::format("{}: {}", context, e.what());
  switch (e.code()) {
    case ErrorCode::format: throw FormatError(msg);
    case ErrorCode::dimension: throw DimensionError(msg);
    case ErrorCode::data: throw DataError(msg);
    case ErrorCode::window: throw WindowError(msg);
    case ErrorCode::degenerate_input: throw DegenerateInputError(msg);
    case ErrorCode::range: throw RangeError(msg);
    case ErrorCode::input: throw InputError(msg);
    case ErrorCode::corpus: throw CorpusError(msg);
    case ErrorCode::incomplete_ratings: throw IncompleteRatingsError(msg);
    case ErrorCode::degenerate_labels: throw DegenerateLabelsError(msg);
    case ErrorCode::io: throw IoError(msg);
    case ErrorCode::config: throw ConfigError(msg);
  }
  throw Error(e.code(), msg);
}

}  // namespace relict
