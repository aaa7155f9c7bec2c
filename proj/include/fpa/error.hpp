#pragma once

#include <stdexcept>
#include <string>

namespace fpa {

// Bad argument to a numeric routine (non-finite input, non-positive
// bandwidth, alpha outside (0,1), ...).
class InvalidArgument : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

// Problems with input data. The CLI maps every subclass to the same exit code.
class DataError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class MissingFile : public DataError
{
public:
  explicit MissingFile(const std::string& path)
    : DataError("cannot open file: " + path)
  {
  }
};

class EmptyInput : public DataError
{
public:
  using DataError::DataError;
};

class ParseError : public DataError
{
public:
  using DataError::DataError;
};

class RaggedPanel : public DataError
{
public:
  using DataError::DataError;
};

class DegenerateSample : public DataError
{
public:
  using DataError::DataError;
};

class InsufficientSample : public DataError
{
public:
  using DataError::DataError;
};

class RankDeficient : public DataError
{
public:
  using DataError::DataError;
};

// Evaluation point outside the domain of an estimator.
class OutOfDomain : public std::domain_error
{
public:
  using std::domain_error::domain_error;
};

// Estimation produced something unusable (non-finite sup statistic,
// non-positive variance on a band grid, ...).
class NumericalFailure : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

} // namespace fpa
