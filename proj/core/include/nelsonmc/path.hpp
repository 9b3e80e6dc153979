#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace nelsonmc {

/// Discretized particle trajectory on the uniform grid t_i = -T + i*dt,
/// i = 0..n_beads-1, with an odd bead count so that t = 0 is a node.
struct ParticlePath {
    double half_width = 0.0; // T
    double dt = 0.0;
    int dim = 3;
    int n_beads = 0;
    std::vector<double> pos; // row-major, pos[i*dim + a]

    double time_at(int i) const { return -half_width + i * dt; }
    int center_index() const { return (n_beads - 1) / 2; }
    double* bead(int i) { return pos.data() + static_cast<std::size_t>(i) * dim; }
    const double* bead(int i) const { return pos.data() + static_cast<std::size_t>(i) * dim; }

    /// Euclidean distance between beads i and j.
    double bead_distance(int i, int j) const {
        const double* a = bead(i);
        const double* b = bead(j);
        double s = 0.0;
        for (int c = 0; c < dim; ++c) {
            const double d = a[c] - b[c];
            s += d * d;
        }
        return std::sqrt(s);
    }
};

/// Zero-initialized path; throws if 2T/dt is not an even integer (t = 0 must
/// land on a node).
ParticlePath make_path(double half_width, double dt, int dim);

} // namespace nelsonmc
