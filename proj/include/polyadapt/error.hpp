#pragma once

#include <stdexcept>
#include <string>

namespace polyadapt {

// Contract violations and numeric failures inside the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or missing input data (files, corpora, configs). The CLI maps
// these to exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace polyadapt
