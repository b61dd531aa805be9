#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "caol/errors.hpp"

namespace caol::report {

inline constexpr const char* kVersion = "0.1.0";

/// Process exit statuses; stable across releases.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumerical = 4,
  kExitValidation = 5,
};

int exit_code_for(ErrorCode code) noexcept;

/// 17 significant digits, enough to round-trip any double.
std::string format_double(double v);

/// Comma-separated table with LF line endings. Metadata lines start with '#'
/// and precede the header.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<std::string> cells);
  void add_comment(const std::string& line) { comments_.push_back(line); }
  std::size_t rows() const noexcept { return rows_.size(); }
  std::string str() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::string> comments_;
  std::vector<std::vector<std::string>> rows_;
};

/// Parsed CSV: '#' lines skipped, first remaining line is the header.
struct ParsedCsv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};
ParsedCsv parse_csv(const std::string& text);

/// Every write lands inside `root`; files appear atomically (temp + rename).
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }
  /// `name` must be relative and must not climb out of the root.
  std::filesystem::path write(const std::string& name, const std::string& bytes) const;

 private:
  std::filesystem::path root_;
};

/// Header block shared by every report: version, seed and the run config.
nlohmann::json provenance(const nlohmann::json& config, std::uint64_t seed);
void stamp(CsvTable& table, const nlohmann::json& config, std::uint64_t seed);

}  // namespace caol::report
