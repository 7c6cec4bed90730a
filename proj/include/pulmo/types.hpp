#ifndef PULMO_TYPES_HPP
#define PULMO_TYPES_HPP

#include <Eigen/Core>

#include <complex>
#include <stdexcept>
#include <string>

namespace pulmo {

template <class T, int R = Eigen::Dynamic, int C = Eigen::Dynamic>
using matrix = Eigen::Matrix<T, R, C>;

template <class T, int R = Eigen::Dynamic>
using vector = matrix<T, R, 1>;

template <class T>
using row_vector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using real = double;
using cplx = std::complex<real>;

using mat = matrix<real>;
using vec = vector<real>;
using cmat = matrix<cplx>;
using cvec = vector<cplx>;

/// Base class for all library errors. Carries a one-line diagnostic.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for bad arguments, shapes or configuration values.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Raised for file access and format problems.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pulmo

#endif
