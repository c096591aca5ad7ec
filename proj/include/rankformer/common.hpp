#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace rankformer {

// Row-major so that one row is one item (or one hidden state) and the
// padded (num_lists, L_max, d) layout is a plain stack of rows.
template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line), detail_(what) {}

  std::size_t line() const { return line_; }
  const std::string& detail() const { return detail_; }

  /// Same error, prefixed with the file it came from.
  ParseError in_file(const std::string& path) const { return ParseError(path, line_, detail_); }

 private:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ": line " + std::to_string(line) + ": " + what), line_(line), detail_(what) {}

  std::size_t line_;
  std::string detail_;
};

/// Shortest decimal representation that parses back to the identical value.
template <class T>
std::string format_exact(T value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

template <class T>
bool parse_number(std::string_view text, T& out) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

}  // namespace rankformer
