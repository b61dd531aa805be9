#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace caol {

enum class ErrorCode {
  InvalidOffset,
  DimensionMismatch,
  EmptyDataset,
  RankDeficient,
  DeltaOutOfRange,
  RankHypothesisUnsatisfiable,
  MissingSnapshots,
  MalformedHeader,
  TruncatedData,
  BadMagic,
  DimensionOverflow,
  UnknownStep,
  PatchTooLarge,
  ChecksumMismatch,
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Library-wide exception. `module()` names the component that raised it so
/// the command-line layer can print a one-line diagnostic.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string module, const std::string& what)
      : std::runtime_error(what), code_(code), module_(std::move(module)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorCode code_;
  std::string module_;
};

/// RankDeficient raised inside the alternating trainer carries the iteration.
class TrainError : public Error {
 public:
  TrainError(const Error& cause, std::size_t iteration)
      : Error(cause.code(), cause.module(),
              std::string(cause.what()) + " (iteration " +
                  std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace caol
