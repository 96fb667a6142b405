#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace sensmpc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// A precondition on dimensions or argument ranges was violated by the caller.
class ContractError : public Error
{
public:
  using Error::Error;
};

class IntegrationDiverged : public Error
{
public:
  using Error::Error;
};

class ModelDomainError : public Error
{
public:
  using Error::Error;
};

class GradientEvaluationError : public Error
{
public:
  using Error::Error;
};

class InfeasibleError : public Error
{
public:
  using Error::Error;
};

/// Raised when the iteration budget is exhausted; carries the best iterate found.
class MaxIterationsError : public Error
{
public:
  MaxIterationsError(const std::string & what, Eigen::VectorXd best, double best_value, double residual)
      : Error(what + " (cost " + std::to_string(best_value) + ", projected gradient " + std::to_string(residual) + ")"),
        best_iterate(std::move(best)), best_value(best_value), residual(residual)
  {}

  Eigen::VectorXd best_iterate;
  double best_value;
  double residual;
};

class RegularityIndeterminate : public Error
{
public:
  using Error::Error;
};

class SensitivityUnavailable : public Error
{
public:
  using Error::Error;
};

class IllConditioned : public Error
{
public:
  using Error::Error;
};

class AlphaUndefined : public Error
{
public:
  using Error::Error;
};

class RegionUndefined : public Error
{
public:
  using Error::Error;
};

class ConfigError : public Error
{
public:
  using Error::Error;
};

class ParseError : public Error
{
public:
  ParseError(const std::string & what, std::size_t line) : Error(what), line(line) {}

  std::size_t line;
};

}  // namespace sensmpc
