#include "nelsonmc/path.hpp"

#include <cmath>

namespace nelsonmc {

ParticlePath make_path(double half_width, double dt, int dim) {
    if (!(half_width > 0.0) || !(dt > 0.0))
        throw std::invalid_argument("make_path: half_width and dt must be positive");
    if (dim != 1 && dim != 3)
        throw std::invalid_argument("make_path: only d=1 and d=3 are supported");
    const double steps = 2.0 * half_width / dt;
    const long n_steps = std::lround(steps);
    if (std::fabs(steps - static_cast<double>(n_steps)) > 1e-9 || n_steps % 2 != 0)
        throw std::invalid_argument("make_path: 2T/dt must be an even integer so t=0 is a grid node");
    ParticlePath p;
    p.half_width = half_width;
    p.dt = dt;
    p.dim = dim;
    p.n_beads = static_cast<int>(n_steps) + 1;
    p.pos.assign(static_cast<std::size_t>(p.n_beads) * dim, 0.0);
    return p;
}

} // namespace nelsonmc
