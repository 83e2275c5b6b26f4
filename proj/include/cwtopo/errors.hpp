#pragma once

#include <stdexcept>
#include <string>

namespace cwtopo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class GeometryError : public Error { using Error::Error; };
class IndexError : public Error { using Error::Error; };
class NotSpdError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class TopologyError : public Error { using Error::Error; };
class LiftingError : public Error { using Error::Error; };
class LibraryError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class ContractError : public Error { using Error::Error; };

} // namespace cwtopo
