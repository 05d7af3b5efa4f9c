//
// Copyright 2026 The Topoguard Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef TOPOGUARD_ERRORS_HPP_
#define TOPOGUARD_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace topoguard {

// Base class for all library errors. Everything thrown on purpose derives
// from this, so callers can catch topoguard::Error at API boundaries.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

// A camera rotation that is not close enough to a proper rotation matrix.
class InvalidPose : public Error {
 public:
  using Error::Error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class NumericOverflow : public Error {
 public:
  using Error::Error;
};

class NumericUnderflow : public Error {
 public:
  using Error::Error;
};

class MissingIdentity : public Error {
 public:
  using Error::Error;
};

class NoPositive : public Error {
 public:
  using Error::Error;
};

class NoNegative : public Error {
 public:
  using Error::Error;
};

class EmptyBatch : public Error {
 public:
  using Error::Error;
};

class SizeLimit : public Error {
 public:
  using Error::Error;
};

class InvalidMarginals : public Error {
 public:
  using Error::Error;
};

class InvalidEvalSetup : public Error {
 public:
  using Error::Error;
};

// Iterative solver ran out of iterations. Carries the last residual so the
// caller can decide whether the partial answer is still useful.
class ConvergenceFailure : public Error {
 public:
  ConvergenceFailure(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class PersistenceError : public Error {
 public:
  using Error::Error;
};

class TrainingFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace topoguard

#endif  // TOPOGUARD_ERRORS_HPP_
