#pragma once

#include <stdexcept>
#include <string>

namespace xferlens {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data. Carries file/line when known.
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(what) {}
  InputError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), file_(file), line_(line) {}

  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_ = 0;
};

/// A factorization or solver failed for numerical reasons.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid combination of arguments (e.g. attribution method vs model kind).
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace xferlens
