#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "flowcap/special.hpp"

namespace flowcap {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Deterministic random stream. Substream seeds are derived with splitmix64 so
// that (seed, stream_id) pairs give independent, reproducible generators.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream_id) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream_id + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static Rng substream(std::uint64_t seed, std::uint64_t stream_id) {
        return Rng(derive(seed, stream_id));
    }

    // Uniform on (0, 1), strictly inside the open interval.
    double uniform() {
        const std::uint64_t x = engine_();
        return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() { return norm_quantile(uniform()); }

    double chisq(int dof) {
        double s = 0.0;
        for (int i = 0; i < dof; ++i) {
            const double g = normal();
            s += g * g;
        }
        return s;
    }

    int uniform_int(int lo, int hi) { // inclusive bounds
        const auto span = static_cast<std::uint64_t>(hi - lo + 1);
        return lo + static_cast<int>(engine_() % span);
    }

    Vec normal_vec(int dim) {
        Vec v(dim);
        for (int i = 0; i < dim; ++i) v[i] = normal();
        return v;
    }

    Vec unit_vec(int dim) {
        Vec v = normal_vec(dim);
        const double n = v.norm();
        return n > 0.0 ? Vec(v / n) : unit_vec(dim);
    }

    // Uniform in the closed ball of given radius around a center.
    Vec in_ball(const Vec& center, double radius) {
        const int d = static_cast<int>(center.size());
        const double r = radius * std::pow(uniform(), 1.0 / d);
        return center + r * unit_vec(d);
    }

private:
    std::mt19937_64 engine_;
};

} // namespace flowcap
