#include "cfbound/random.hpp"

#include "cfbound/errors.hpp"

#include <algorithm>
#include <cmath>

namespace cfbound {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

std::vector<double> sample_dirichlet(Rng& rng, std::size_t n, double alpha) {
    if (!(alpha > 0.0)) throw DomainError("Dirichlet concentration must be positive");
    if (n == 0) return {};
    // G(alpha) = G(alpha + 1) * U^(1/alpha)
    std::gamma_distribution<double> gamma(alpha + 1.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> logs(n);
    for (auto& l : logs) {
        double u = unif(rng);
        while (u <= 0.0) u = unif(rng);
        l = std::log(gamma(rng)) + std::log(u) / alpha;
    }
    const double mx = *std::max_element(logs.begin(), logs.end());
    double total = 0.0;
    for (auto& l : logs) {
        l = std::exp(l - mx);
        total += l;
    }
    for (auto& l : logs) l /= total;
    return logs;
}

int sample_categorical(Rng& rng, const std::vector<double>& p) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double r = unif(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (r < acc) return static_cast<int>(i);
    }
    // rounding: last state with positive mass
    for (std::size_t i = p.size(); i-- > 0;) {
        if (p[i] > 0.0) return static_cast<int>(i);
    }
    throw DomainError("empty probability vector");
}

}  // namespace cfbound
