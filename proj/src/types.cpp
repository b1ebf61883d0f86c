#include "nvwire/types.hpp"

#include <algorithm>
#include <cmath>

namespace nvwire {

bool PlaneLattice::same_geometry(const PlaneLattice& other, double rel_tol) const {
    const double tol = rel_tol * std::max(pitch, other.pitch);
    return nx == other.nx && ny == other.ny && std::abs(pitch - other.pitch) <= tol &&
           std::abs(x0 - other.x0) <= tol && std::abs(y0 - other.y0) <= tol &&
           std::abs(z - other.z) <= tol;
}

}  // namespace nvwire
