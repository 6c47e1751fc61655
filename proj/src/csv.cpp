#include "nbhd/csv.hpp"

#include <stdexcept>

#include "nbhd/error.hpp"
#include "nbhd/util.hpp"

namespace nbhd::csv {

namespace {

// Splits text into records, honoring quoted fields that span lines.
std::vector<Row> tokenize(std::string_view text, const std::string& source) {
  std::vector<Row> records;
  Row current;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  current.line = line;

  auto end_field = [&] {
    current.cells.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = current.cells.size() == 1 && current.cells[0].empty();
    if (!blank) records.push_back(std::move(current));
    current = Row{};
  };

  std::size_t i = 0;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty())
          throw Error(ErrorKind::MalformedRow,
                      source + ":" + std::to_string(line) + ": stray quote inside field");
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        current.line = line;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes)
    throw Error(ErrorKind::MalformedRow, source + ":" + std::to_string(line) + ": unterminated quote");
  if (field_started || !field.empty() || !current.cells.empty()) end_record();
  return records;
}

}  // namespace

Table Table::parse(std::string_view text, const std::string& source_name) {
  Table t;
  t.source_ = source_name;
  auto records = tokenize(text, source_name);
  if (records.empty()) throw Error(ErrorKind::MalformedRow, source_name + ": missing header row");
  t.header_.reserve(records.front().cells.size());
  for (auto& h : records.front().cells) t.header_.push_back(trim(h));
  for (std::size_t c = 0; c < t.header_.size(); ++c) {
    if (!t.index_.emplace(t.header_[c], c).second)
      throw Error(ErrorKind::MalformedRow, source_name + ":1: duplicate column '" + t.header_[c] + "'");
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].cells.size() != t.header_.size())
      throw Error(ErrorKind::MalformedRow,
                  source_name + ":" + std::to_string(records[r].line) + ": expected " +
                      std::to_string(t.header_.size()) + " fields, found " +
                      std::to_string(records[r].cells.size()));
    t.rows_.push_back(std::move(records[r]));
  }
  return t;
}

Table Table::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.string());
}

bool Table::has_column(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t Table::column(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw Error(ErrorKind::MalformedRow, source_ + ":1: missing column '" + std::string(name) + "'");
  return it->second;
}

const std::string& Table::cell(const Row& row, std::string_view name) const {
  return row.cells[column(name)];
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

Writer::Writer(std::vector<std::string> header) : width_(header.size()) { add_row(header); }

void Writer::add_row(const std::vector<std::string>& cells) {
  if (cells.size() != width_) throw std::logic_error("csv::Writer: row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_.push_back(',');
    out_ += escape(cells[i]);
  }
  out_.push_back('\n');
}

}  // namespace nbhd::csv
