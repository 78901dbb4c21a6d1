#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace taskprompt::text {

std::string_view trim(std::string_view s);
std::string_view ltrim(std::string_view s);
std::string_view rtrim(std::string_view s);
std::string to_lower(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_words(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool istarts_with(std::string_view s, std::string_view prefix);
std::string capitalize(std::string_view s);
/// Collapse runs of whitespace to one space and trim the ends.
std::string squeeze(std::string_view s);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// One logical line of a line-oriented fixture file: `key: value`.
/// Blank and `#` lines are skipped by `keyed_lines`.
struct KeyedLine {
  std::size_t line_no = 0;
  std::string key;
  std::string value;
};

/// Splits `contents` into keyed lines; a non-comment line without a
/// `key:` prefix throws MalformedLine.
std::vector<KeyedLine> keyed_lines(std::string_view contents);

}  // namespace taskprompt::text
