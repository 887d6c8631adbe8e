// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace residscope {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes of operands disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A precondition of an operation does not hold (bad index, empty input, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class CheckpointMagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointShapeError : public CheckpointError {
 public:
  CheckpointShapeError(std::string tensor, const std::string& what)
      : CheckpointError(what), tensor_(std::move(tensor)) {}
  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

class TokenizerError : public Error {
 public:
  using Error::Error;
};

// Two models cannot be compared because their vocabularies differ.
class TokenizerMismatchError : public Error {
 public:
  using Error::Error;
};

class TaskGenerationError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(std::size_t step, const std::string& what)
      : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// Depth score or rank correlation asked of degenerate input.
class UndefinedScoreError : public Error {
 public:
  using Error::Error;
};

class RegularizationRequiredError : public Error {
 public:
  using Error::Error;
};

// Bad command line or run configuration; maps to exit status 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace residscope
