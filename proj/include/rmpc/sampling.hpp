#pragma once

#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "rmpc/errors.hpp"
#include "rmpc/problem.hpp"

namespace rmpc {

/// Latin hypercube sample of size n over the box: per coordinate, exactly one
/// point falls in each of the n equal-width strata, uniformly placed within
/// its stratum. Deterministic for a given seed.
inline std::vector<Vector> latin_hypercube(int n, const Box& box, unsigned long seed) {
    if (n < 1) throw InvalidArgumentError("latin_hypercube: sample count must be at least 1");
    box.validate();
    const int d = box.size();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<Vector> samples(n, Vector(d, 0.0));
    std::vector<int> perm(n);
    for (int j = 0; j < d; ++j) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        const double w = (box.upper[j] - box.lower[j]) / n;
        for (int i = 0; i < n; ++i) samples[i][j] = box.lower[j] + (perm[i] + u01(rng)) * w;
    }
    return samples;
}

/// Box shrunk towards its centre by a relative margin per side; used to keep
/// sample points strictly interior.
inline Box shrink_box(const Box& box, double relative_margin) {
    Box out = box;
    for (int i = 0; i < box.size(); ++i) {
        const double margin = relative_margin * (box.upper[i] - box.lower[i]);
        out.lower[i] += margin;
        out.upper[i] -= margin;
        if (out.lower[i] > out.upper[i]) out.lower[i] = out.upper[i] = 0.5 * (box.lower[i] + box.upper[i]);
    }
    return out;
}

/// Pairs of strictly interior controls for invexity testing: two independent
/// Latin hypercube batches on the shrunken box, matched by index.
inline std::vector<std::pair<Vector, Vector>> interior_control_pairs(const Box& box, int count,
                                                                     unsigned long seed,
                                                                     double relative_margin = 1e-6) {
    const Box inner = shrink_box(box, relative_margin);
    const auto first = latin_hypercube(count, inner, seed);
    const auto second = latin_hypercube(count, inner, seed + 0x9e3779b97f4a7c15ULL);
    std::vector<std::pair<Vector, Vector>> pairs;
    pairs.reserve(count);
    for (int i = 0; i < count; ++i) pairs.emplace_back(first[i], second[i]);
    return pairs;
}

} // namespace rmpc
