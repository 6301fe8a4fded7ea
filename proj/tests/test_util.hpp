#pragma once

#include "dosk/kernel.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <random>

namespace testutil {

inline dosk::Matrix random_matrix(std::mt19937_64 &rng, Eigen::Index r, Eigen::Index c, double lo = 0.0,
                                  double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    dosk::Matrix M(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) M(i, j) = u(rng);
    return M;
}

inline oracle::Kern to_oracle(const dosk::KernelSpec &s) {
    oracle::Kern k;
    k.gamma = s.gamma;
    k.c = s.offset_c;
    k.d = s.degree_d;
    switch (s.family) {
    case dosk::KernelFamily::Linear: k.family = oracle::Family::Linear; break;
    case dosk::KernelFamily::Polynomial: k.family = oracle::Family::Polynomial; break;
    case dosk::KernelFamily::Gaussian: k.family = oracle::Family::Gaussian; break;
    case dosk::KernelFamily::Laplacian: k.family = oracle::Family::Laplacian; break;
    }
    return k;
}

}  // namespace testutil
