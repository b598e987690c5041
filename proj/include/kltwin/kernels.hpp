#pragma once

#include <optional>

#include "kltwin/field.hpp"

namespace kltwin {

// Squared-exponential covariance.  Separable product form when both a space
// correlation length l and a time correlation time tau are present:
//   C(x,x',t,t') = variance * exp(-(x-x')^2/l^2) * exp(-(t-t')^2/tau^2).
struct SeKernel {
    double variance = 1.0;
    std::optional<double> l;    // space correlation length
    std::optional<double> tau;  // time correlation time

    void validate() const {
        if (!(variance > 0.0)) throw InvalidArgument("SeKernel: variance must be > 0");
        if (l && !(*l > 0.0)) throw InvalidArgument("SeKernel: l must be > 0");
        if (tau && !(*tau > 0.0)) throw InvalidArgument("SeKernel: tau must be > 0");
        if (!l && !tau) throw InvalidArgument("SeKernel: at least one of l, tau required");
    }
};

// Gram matrix of exp(-(p_i-p_j)^2/len^2) over the given coordinates, times var.
Mat se_gram(const Vec& coords, double var, double len);

// Coordinates of all nodes along one grid axis.
Vec space_coords(const Grid& grid);
Vec time_coords(const Grid& grid);

} // namespace kltwin
