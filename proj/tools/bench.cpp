// Times the serial reference kernels against the OpenMP versions and checks
// they agree bit for bit on the benchmark inputs.
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ssfl/kernels.hpp"
#include "ssfl/rng.hpp"

namespace {

using clock_type = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    auto start = clock_type::now();
    for (int i = 0; i < reps; ++i) fn();
    auto stop = clock_type::now();
    return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

}  // namespace

int main() {
    const std::size_t rows = 256, in = 512, out = 256;
    const int reps = 10;

    ssfl::Rng rng(12345);
    std::vector<double> x(rows * in), w(in * out), b(out), dy(rows * out);
    for (double& v : x) v = rng.normal();
    for (double& v : w) v = rng.normal();
    for (double& v : b) v = rng.normal();
    for (double& v : dy) v = rng.normal();

#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (built without OpenMP)\n");
#endif
    std::printf("shape: rows=%zu in=%zu out=%zu, %d reps\n\n", rows, in, out, reps);
    std::printf("%-16s %12s %12s %9s %8s\n", "kernel", "serial ms", "parallel ms", "speedup",
                "match");

    auto report = [&](const char* name, auto serial_fn, auto parallel_fn,
                      std::vector<double>& ref, std::vector<double>& got) {
        double ts = time_ms(serial_fn, reps);
        double tp = time_ms(parallel_fn, reps);
        std::printf("%-16s %12.3f %12.3f %8.2fx %8s\n", name, ts, tp, ts / tp,
                    bitwise_equal(ref, got) ? "exact" : "DIFFERS");
    };

    {
        std::vector<double> ys(rows * out), yp(rows * out);
        report(
            "linear_forward",
            [&] { ssfl::kernels::serial::linear_forward(x.data(), w.data(), b.data(), ys.data(),
                                                        rows, in, out); },
            [&] { ssfl::kernels::parallel::linear_forward(x.data(), w.data(), b.data(), yp.data(),
                                                          rows, in, out); },
            ys, yp);
    }
    {
        std::vector<double> gs(in * out), gp(in * out);
        report(
            "grad_weights",
            [&] { ssfl::kernels::serial::grad_weights(x.data(), dy.data(), gs.data(), rows, in,
                                                      out); },
            [&] { ssfl::kernels::parallel::grad_weights(x.data(), dy.data(), gp.data(), rows, in,
                                                        out); },
            gs, gp);
    }
    {
        std::vector<double> gs(out), gp(out);
        report(
            "grad_bias",
            [&] { ssfl::kernels::serial::grad_bias(dy.data(), gs.data(), rows, out); },
            [&] { ssfl::kernels::parallel::grad_bias(dy.data(), gp.data(), rows, out); }, gs, gp);
    }
    {
        std::vector<double> gs(rows * in), gp(rows * in);
        report(
            "grad_input",
            [&] { ssfl::kernels::serial::grad_input(dy.data(), w.data(), gs.data(), rows, in,
                                                    out); },
            [&] { ssfl::kernels::parallel::grad_input(dy.data(), w.data(), gp.data(), rows, in,
                                                      out); },
            gs, gp);
    }
    return 0;
}
