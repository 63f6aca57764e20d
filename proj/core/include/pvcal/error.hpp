#ifndef PVCAL_ERROR_HPP
#define PVCAL_ERROR_HPP

#include <stdexcept>
#include <string>

namespace pvcal {

enum class ErrorKind {
  domain,          // argument outside the mathematical domain
  degenerate,      // zero variance or otherwise degenerate distribution
  no_saddlepoint,  // target outside the support hull
  convergence,     // iterative solver did not converge
  separation,      // logistic regression with (quasi-)separated data
  rank_deficient,  // design matrix or information not of full rank
  inconsistent,    // fits that contradict each other (negative deviance, ...)
  unsupported,     // operation not defined for this input (e.g. lattice density)
  config,          // malformed or invalid configuration
  io,              // file could not be read or written
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pvcal

#endif  // PVCAL_ERROR_HPP
