#pragma once

#include <stdexcept>
#include <string>

namespace nvwire {

/// Base class for every error raised by the toolkit.
///
/// `kind()` is a stable machine-readable tag (e.g. "format-error") that the
/// CLI prints on its single-line error report.
class Error : public std::runtime_error {
  public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

  private:
    std::string kind_;
};

#define NVWIRE_DEFINE_ERROR(Name, tag)                                                    \
    class Name : public Error {                                                           \
      public:                                                                             \
        explicit Name(const std::string& message) : Error(tag, message) {}                \
    }

NVWIRE_DEFINE_ERROR(InvalidDiscretizationError, "invalid-discretization");
NVWIRE_DEFINE_ERROR(SingularEvaluationError, "singular-evaluation");
NVWIRE_DEFINE_ERROR(IncompleteMaterialError, "incomplete-material");
NVWIRE_DEFINE_ERROR(ExpansionDomainError, "expansion-domain");
NVWIRE_DEFINE_ERROR(UnderdeterminedError, "underdetermined");
NVWIRE_DEFINE_ERROR(GeometryError, "geometry-error");
NVWIRE_DEFINE_ERROR(ConfigurationError, "configuration-error");
NVWIRE_DEFINE_ERROR(InvalidArgumentError, "invalid-argument");
NVWIRE_DEFINE_ERROR(FitFailureError, "fit-failure");
NVWIRE_DEFINE_ERROR(DegenerateTemplateError, "degenerate-template");
NVWIRE_DEFINE_ERROR(IoError, "io-error");

#undef NVWIRE_DEFINE_ERROR

/// Malformed input text; carries the 1-based line number where it was detected.
class FormatError : public Error {
  public:
    FormatError(int line, const std::string& message)
        : Error("format-error", "line " + std::to_string(line) + ": " + message), line_(line) {}

    int line() const noexcept { return line_; }

  private:
    int line_;
};

/// Config problem tied to a key and its line.
class ConfigError : public Error {
  public:
    ConfigError(std::string key, int line, const std::string& message)
        : Error("config-error",
                "line " + std::to_string(line) + ", key '" + key + "': " + message),
          key_(std::move(key)),
          line_(line) {}

    const std::string& key() const noexcept { return key_; }
    int line() const noexcept { return line_; }

  private:
    std::string key_;
    int line_;
};

}  // namespace nvwire
