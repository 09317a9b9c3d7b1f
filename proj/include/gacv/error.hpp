#ifndef GACV_ERROR_HPP
#define GACV_ERROR_HPP

#include <stdexcept>
#include <string>

namespace gacv {

/// Invalid input: malformed groups, dimension mismatches, bad configuration.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// A well-formed problem that cannot be solved numerically (singular C,
/// infeasible unbiasedness constraint, rejected random draws).
class NumericalError : public Error
{
public:
  NumericalError(const std::string& what, double condition_number = 0.0)
    : Error(what), condition_number_(condition_number)
  {}

  double condition_number() const noexcept { return condition_number_; }

private:
  double condition_number_;
};

}  // namespace gacv

#endif  // GACV_ERROR_HPP
