#pragma once

#include <stdexcept>
#include <string>

namespace sercor {

struct DegenerateInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FactorizationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoRoot : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Quadrature that ran out of subdivisions; carries the best estimate and
/// the accumulated error bound at the point of giving up.
struct QuadratureFailure : std::runtime_error {
    QuadratureFailure(const std::string& what, double best_estimate, double error_bound)
        : std::runtime_error(what), best(best_estimate), bound(error_bound) {}
    double best;
    double bound;
};

/// Saddlepoint solve that could not be completed; carries the query point,
/// the zero-crossing point of the tilt, and the bracket that was tried.
struct SaddleFailure : std::runtime_error {
    SaddleFailure(const std::string& what, double u_, double u0_, double lo, double hi)
        : std::runtime_error(what), u(u_), u0(u0_), bracket_lo(lo), bracket_hi(hi) {}
    double u;
    double u0;
    double bracket_lo;
    double bracket_hi;
};

} // namespace sercor
