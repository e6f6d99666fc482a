#pragma once

#include <stdexcept>
#include <string>

namespace vseg {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error { using Error::Error; };
struct ValueError : Error { using Error::Error; };
struct IndexError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct ContractError : Error { using Error::Error; };
struct CapacityError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
// input data that is structurally valid but unusable (e.g. an all-background
// modality, or zero intensity spread where a std-divide is required)
struct DegenerateError : Error { using Error::Error; };

} // namespace vseg
