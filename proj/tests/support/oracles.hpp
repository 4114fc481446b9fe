#pragma once

// Independent reference implementations used only by tests.

#include <clickseg/mrf.hpp>
#include <clickseg/temporal.hpp>

#include <algorithm>
#include <cmath>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace clickseg::testing {

struct BruteForceMinimum {
    double energy = std::numeric_limits<double>::infinity();
    Labeling labeling;       // lattice minimum among all minimizers
    int n_minimizers = 0;
};

/// Enumerate all 2^n labelings. Minimizers within `tol` of the best are
/// intersected (label 1 only where every minimizer says 1), which for a
/// submodular energy is itself a minimizer.
inline BruteForceMinimum brute_force_minimum(const EnergyProblem& p, double tol = 1e-9)
{
    const int n = p.n_nodes();
    if (n > 24)
        throw std::invalid_argument("brute force limited to 24 nodes");
    const std::uint64_t count = std::uint64_t{1} << n;
    std::vector<double> energies(count);
    Labeling l(n);
    double best = std::numeric_limits<double>::infinity();
    for (std::uint64_t mask = 0; mask < count; ++mask) {
        double e = 0.0;
        for (int i = 0; i < n; ++i) {
            l[i] = (mask >> i) & 1u;
            e += l[i] ? p.unary[i].label1 : p.unary[i].label0;
        }
        for (const auto& t : p.pairwise) {
            if (l[t.i] != l[t.j])
                e += t.weight;
        }
        energies[mask] = e;
        if (e < best)
            best = e;
    }
    BruteForceMinimum r;
    r.energy = best;
    std::uint64_t meet = count - 1;
    for (std::uint64_t mask = 0; mask < count; ++mask) {
        if (energies[mask] <= best + tol) {
            meet &= mask;
            ++r.n_minimizers;
        }
    }
    r.labeling.resize(n);
    for (int i = 0; i < n; ++i)
        r.labeling[i] = (meet >> i) & 1u;
    return r;
}

/// Window energy evaluated straight from the artifacts: frames
/// [first, last], nodes ordered frame by frame.
inline double window_energy(const std::vector<FrameArtifacts>& a, int first, int last, const Labeling& l,
                            const Params& p)
{
    auto chi2 = [](const Histogram& x, const Histogram& y) {
        double d = 0.0;
        for (std::size_t i = 0; i < x.values.size(); ++i) {
            const double s = x.values[i] + y.values[i];
            if (s > 0)
                d += (x.values[i] - y.values[i]) * (x.values[i] - y.values[i]) / s;
        }
        return 0.5 * d;
    };
    std::vector<int> offset;
    int n = 0;
    for (int t = first; t <= last; ++t) {
        offset.push_back(n);
        n += a[t].map.size();
    }
    double e = 0.0;
    for (int t = first; t <= last; ++t) {
        const int o = offset[t - first];
        for (int s = 0; s < a[t].map.size(); ++s)
            e += p.alpha2 * (l[o + s] == a[t].stage1.labels[s] ? p.gamma1 : p.gamma2);
        for (int s = 0; s < a[t].map.size(); ++s) {
            for (int m : a[t].adjacency.neighbors[s]) {
                if (s < m && l[o + s] != l[o + m])
                    e += std::exp(-p.beta1 * chi2(a[t].histograms[s], a[t].histograms[m]));
            }
        }
        if (t < last) {
            const int o1 = offset[t + 1 - first];
            for (const auto& [s, m] : a[t].links_to_next.pairs) {
                if (l[o + s] != l[o1 + m])
                    e += std::exp(-p.beta1 * chi2(a[t].histograms[s], a[t + 1].histograms[m]));
            }
        }
    }
    return e;
}

/// Center-frame labels of the lattice-minimal minimizer found by
/// enumerating every labeling of the window.
inline Labeling brute_force_center(const std::vector<FrameArtifacts>& a, int center, const Params& p,
                                   double tol = 1e-9)
{
    const int first = std::max(0, center - p.t_window);
    const int last = std::min(static_cast<int>(a.size()) - 1, center + p.t_window);
    int n = 0, center_offset = 0;
    for (int t = first; t <= last; ++t) {
        if (t == center)
            center_offset = n;
        n += a[t].map.size();
    }
    if (n > 24)
        throw std::invalid_argument("brute force limited to 24 nodes");
    const std::uint64_t count = std::uint64_t{1} << n;
    std::vector<double> energies(count);
    double best = std::numeric_limits<double>::infinity();
    Labeling l(n);
    for (std::uint64_t mask = 0; mask < count; ++mask) {
        for (int i = 0; i < n; ++i)
            l[i] = (mask >> i) & 1u;
        energies[mask] = window_energy(a, first, last, l, p);
        best = std::min(best, energies[mask]);
    }
    std::uint64_t meet = count - 1;
    for (std::uint64_t mask = 0; mask < count; ++mask) {
        if (energies[mask] <= best + tol)
            meet &= mask;
    }
    Labeling out(a[center].map.size());
    for (int s = 0; s < a[center].map.size(); ++s)
        out[s] = (meet >> (center_offset + s)) & 1u;
    return out;
}

} // namespace clickseg::testing
