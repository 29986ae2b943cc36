#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hzo {

/// Shortest round-trip decimal ("nan", "inf", "-inf" for non-finite values).
/// Locale independent.
std::string format_number(double v);
std::string format_number(std::uint64_t v);

/// CSV report: one '#' comment line (command, schema version, timestamp),
/// then a header row naming every column, then data rows. Only the comment
/// line varies between identical runs.
class CsvTable {
 public:
  static constexpr int kSchemaVersion = 1;

  CsvTable(std::string command, std::vector<std::string> columns);

  /// Cells must match the column count. Cells containing ',', '"' or a
  /// newline are quoted.
  void add_row(std::vector<std::string> cells);

  const std::vector<std::string>& columns() const noexcept { return columns_; }
  const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }
  const std::string& command() const noexcept { return command_; }

  /// Header row and data rows.
  std::string body() const;
  /// Comment line followed by the body.
  std::string str(const std::string& timestamp) const;
  /// Writes str(now in UTC) to `path`.
  void write(const std::filesystem::path& path) const;

 private:
  std::string command_;
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

/// Everything after the first line of `text`.
std::string strip_comment_line(const std::string& text);

}  // namespace hzo
