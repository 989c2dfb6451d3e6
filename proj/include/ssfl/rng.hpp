#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace ssfl {

// Derives the seed of a named sub-stream from a root seed. Every stage of a
// run (partition, init, selection, sampling, masks, ...) draws from its own
// stream so that changing one stage never perturbs the others.
inline std::uint64_t substream(std::uint64_t root, std::string_view name,
                               std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = 14695981039346656037ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffULL;
            h *= 1099511628211ULL;
        }
    };
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    mix(root);
    mix(a);
    mix(b);
    // splitmix64 finalizer
    h += 0x9e3779b97f4a7c15ULL;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    return h ^ (h >> 31);
}

// Deterministic random source. The engine (mt19937_64) is fully specified by
// the standard; all distributions are implemented here by hand because the
// standard library's distribution objects are implementation-defined and
// would break bitwise reproducibility across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // uniform in (0, 1]
    double uniform_pos() { return 1.0 - uniform(); }

    // uniform integer in [0, n), Lemire's unbiased multiply-shift
    std::uint64_t bounded(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::bounded: n == 0");
        std::uint64_t x = eng_();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            std::uint64_t t = (0 - n) % n;
            while (lo < t) {
                x = eng_();
                m = static_cast<__uint128_t>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // standard normal via Box-Muller, second value cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform_pos();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // log of a Gamma(shape, 1) sample; stays finite for shapes far below 1,
    // where the sample itself would underflow to zero
    double log_gamma_sample(double shape) {
        if (!(shape > 0.0)) throw std::invalid_argument("log_gamma_sample: shape <= 0");
        if (shape < 1.0) {
            double boost = std::log(uniform_pos()) / shape;
            return log_gamma_sample(shape + 1.0) + boost;
        }
        // Marsaglia-Tsang
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform_pos();
            if (u < 1.0 - 0.0331 * x * x * x * x) return std::log(d * v);
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return std::log(d * v);
        }
    }

    // log of a Dirichlet(alphas) draw via normalized gamma samples. The log
    // probabilities stay finite even when the linear values underflow, which
    // they do for concentrations like 1e-5 per class.
    std::vector<double> dirichlet_log(const std::vector<double>& alphas) {
        std::vector<double> logs(alphas.size());
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < alphas.size(); ++i) {
            logs[i] = log_gamma_sample(alphas[i]);
            mx = std::max(mx, logs[i]);
        }
        double sum = 0.0;
        for (double l : logs) sum += std::exp(l - mx);
        const double lse = mx + std::log(sum);
        for (double& l : logs) l -= lse;
        return logs;
    }

    // Dirichlet(alphas) draw in linear space; tiny entries may underflow.
    std::vector<double> dirichlet(const std::vector<double>& alphas) {
        std::vector<double> logs = dirichlet_log(alphas);
        for (double& l : logs) l = std::exp(l);
        return logs;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = bounded(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // first k entries of a uniform random permutation of [0, n)
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = i + bounded(n - i);
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace ssfl
