// Times the OpenMP stability-map kernel against the serial reference on a
// dense grid and checks the two produce identical cells.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "grpo/dynamics.hpp"
#include "grpo/sweep.hpp"

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool cells_equal(const std::vector<grpo::StabilityCell>& a,
                 const std::vector<grpo::StabilityCell>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].report.points.size() != b[i].report.points.size()) return false;
        for (std::size_t k = 0; k < a[i].report.points.size(); ++k) {
            if (a[i].report.points[k].p_star != b[i].report.points[k].p_star) return false;
            if (a[i].report.points[k].derivative != b[i].report.points[k].derivative) return false;
        }
    }
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    int cells_per_axis = argc > 1 ? std::atoi(argv[1]) : 96;
    std::vector<double> betas, prefs;
    for (int i = 0; i < cells_per_axis; ++i) {
        betas.push_back(0.01 * std::pow(1000.0, static_cast<double>(i) / (cells_per_axis - 1)));
        prefs.push_back(0.001 + 0.997 * static_cast<double>(i) / (cells_per_axis - 1));
    }
    const grpo::WeightScheme scheme = grpo::WeightScheme::mean_var();

    auto t0 = std::chrono::steady_clock::now();
    const auto serial = grpo::stability_map_serial(scheme, betas, prefs, 1024);
    const double serial_s = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const auto parallel = grpo::stability_map(scheme, betas, prefs, 1024, 0);
    const double parallel_s = seconds_since(t0);

    std::size_t points = 0;
    for (const auto& c : serial) points += c.report.points.size();

    std::printf("grid %dx%d (%zu cells, %zu fixed points)\n", cells_per_axis, cells_per_axis,
                serial.size(), points);
    std::printf("serial   %8.3f s\n", serial_s);
    std::printf("openmp   %8.3f s  (%d jobs, speedup %.2fx)\n", parallel_s,
                grpo::resolve_jobs(0), serial_s / parallel_s);
    if (!cells_equal(serial, parallel)) {
        std::printf("MISMATCH between serial and parallel results\n");
        return 1;
    }
    std::printf("serial and parallel results identical\n");
    return 0;
}
