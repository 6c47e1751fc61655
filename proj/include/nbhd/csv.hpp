#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nbhd::csv {

/// One parsed data row. `line` is the 1-based physical line in the source.
struct Row {
  std::size_t line = 0;
  std::vector<std::string> cells;
};

/// A header-indexed CSV table (RFC 4180 quoting, comma separator, UTF-8).
class Table {
 public:
  static Table parse(std::string_view text, const std::string& source_name = "<memory>");
  static Table load(const std::filesystem::path& path);

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<Row>& rows() const { return rows_; }
  const std::string& source() const { return source_; }

  bool has_column(std::string_view name) const;
  /// Column index; throws MalformedRow naming the missing column.
  std::size_t column(std::string_view name) const;

  const std::string& cell(const Row& row, std::string_view name) const;

 private:
  std::string source_;
  std::vector<std::string> header_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<Row> rows_;
};

/// Quotes a field only when it contains a separator, quote or newline.
std::string escape(std::string_view field);

/// Accumulates rows into canonical CSV text ("\n" line endings).
class Writer {
 public:
  explicit Writer(std::vector<std::string> header);
  void add_row(const std::vector<std::string>& cells);
  const std::string& str() const { return out_; }

 private:
  std::size_t width_;
  std::string out_;
};

}  // namespace nbhd::csv
