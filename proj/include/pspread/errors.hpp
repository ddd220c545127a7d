#pragma once

#include <stdexcept>

namespace pspread {

// Inputs that violate a documented precondition (sizes, widths, mismatches).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A numeric model evaluated outside its domain (singularities, negative radicands).
class ModelError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

}  // namespace pspread
