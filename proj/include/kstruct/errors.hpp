// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace kstruct {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Two observations share a value in some column. `column` is 1-based.
class TieError : public Error {
 public:
  TieError(int column, const std::string& what) : Error(what), column_(column) {}
  int column() const { return column_; }

 private:
  int column_;
};

class SingularError : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(double min_eigenvalue, const std::string& what)
      : Error(what), min_eigenvalue_(min_eigenvalue) {}
  double min_eigenvalue() const { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

class ConstantCovariate : public Error {
 public:
  using Error::Error;
};

}  // namespace kstruct
