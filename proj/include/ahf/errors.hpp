#pragma once

#include <stdexcept>
#include <string>

namespace ahf {

enum class ErrorKind {
  Input,       // malformed or out-of-domain user data
  Structural,  // shape / dimension mismatch
  Parameter,   // hyper-parameter outside its valid range
  Protocol,    // call-order or batch-structure contract violated
  Numeric,     // NaN / Inf encountered
  Io,          // file could not be read or written
  Config,      // inconsistent configuration
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error input_error(const std::string& m) { return {ErrorKind::Input, m}; }
inline Error structural_error(const std::string& m) { return {ErrorKind::Structural, m}; }
inline Error parameter_error(const std::string& m) { return {ErrorKind::Parameter, m}; }
inline Error protocol_error(const std::string& m) { return {ErrorKind::Protocol, m}; }
inline Error numeric_error(const std::string& m) { return {ErrorKind::Numeric, m}; }
inline Error io_error(const std::string& m) { return {ErrorKind::Io, m}; }
inline Error config_error(const std::string& m) { return {ErrorKind::Config, m}; }

/// Process exit code for the CLI: 2 for numeric failures, 1 otherwise.
inline int exit_code_for(ErrorKind kind) { return kind == ErrorKind::Numeric ? 2 : 1; }

}  // namespace ahf
