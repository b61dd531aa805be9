#include "caol/report.hpp"

#include <cstdio>
#include <sstream>
#include <unistd.h>

namespace caol::report {

namespace {

constexpr const char* kModule = "cli-report";

}  // namespace

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::RankDeficient:
    case ErrorCode::RankHypothesisUnsatisfiable:
      return kExitNumerical;
    case ErrorCode::EmptyDataset:
    case ErrorCode::MalformedHeader:
    case ErrorCode::TruncatedData:
    case ErrorCode::BadMagic:
    case ErrorCode::DimensionOverflow:
    case ErrorCode::PatchTooLarge:
    case ErrorCode::ChecksumMismatch:
    case ErrorCode::MissingSnapshots:
    case ErrorCode::Io:
      return kExitData;
    case ErrorCode::InvalidOffset:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::DeltaOutOfRange:
    case ErrorCode::UnknownStep:
    case ErrorCode::InvalidArgument:
      return kExitConfig;
  }
  return kExitConfig;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void CsvTable::add_row(std::vector<std::string> cells) {
  if (cells.size() != header_.size())
    throw Error(ErrorCode::InvalidArgument, kModule, "CSV row width differs from header");
  rows_.push_back(std::move(cells));
}

std::string CsvTable::str() const {
  std::string out;
  const auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  for (const std::string& c : comments_) out += "# " + c + "\n";
  line(header_);
  for (const auto& row : rows_) line(row);
  return out;
}

std::size_t ParsedCsv::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw Error(ErrorCode::InvalidArgument, kModule, "CSV has no column '" + name + "'");
}

ParsedCsv parse_csv(const std::string& text) {
  ParsedCsv out;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::istringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) cells.push_back(cell);
    if (!have_header) {
      out.header = std::move(cells);
      have_header = true;
    } else {
      out.rows.push_back(std::move(cells));
    }
  }
  return out;
}

OutputDir::OutputDir(std::filesystem::path root) : root_(std::move(root)) {
  if (root_.empty()) throw Error(ErrorCode::InvalidArgument, kModule, "--out must name a directory");
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec) throw Error(ErrorCode::Io, kModule, "cannot create " + root_.string() + ": " + ec.message());
}

std::filesystem::path OutputDir::write(const std::string& name, const std::string& bytes) const {
  const std::filesystem::path rel = std::filesystem::path(name).lexically_normal();
  if (rel.empty() || rel.is_absolute() || *rel.begin() == "..")
    throw Error(ErrorCode::InvalidArgument, kModule, "refusing to write '" + name + "' outside --out");
  const std::filesystem::path target = root_ / rel;
  std::error_code ec;
  std::filesystem::create_directories(target.parent_path(), ec);
  if (ec) throw Error(ErrorCode::Io, kModule, "cannot create " + target.parent_path().string());

  const std::filesystem::path tmp =
      target.parent_path() / ("." + target.filename().string() + ".tmp" + std::to_string(::getpid()));
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw Error(ErrorCode::Io, kModule, "cannot write " + tmp.string());
  const bool ok = std::fwrite(bytes.data(), 1, bytes.size(), f) == bytes.size();
  if (std::fclose(f) != 0 || !ok) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::Io, kModule, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::Io, kModule, "cannot rename into " + target.string());
  }
  return target;
}

nlohmann::json provenance(const nlohmann::json& config, std::uint64_t seed) {
  return {{"caol_version", kVersion}, {"seed", seed}, {"config", config}};
}

void stamp(CsvTable& table, const nlohmann::json& config, std::uint64_t seed) {
  table.add_comment(std::string("caol_version: ") + kVersion);
  table.add_comment("seed: " + std::to_string(seed));
  table.add_comment("config: " + config.dump());
}

}  // namespace caol::report
