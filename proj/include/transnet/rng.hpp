#ifndef TRANSNET_RNG_HPP
#define TRANSNET_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace transnet {

// Deterministic RNG with self-contained distributions. std::* distribution
// objects are implementation-defined, so uniform/normal are derived from the
// raw mt19937_64 stream here to keep trajectories reproducible.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0,1).
    double uniform() {
        return double(engine_() >> 11) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }
    // Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        return lo + int(engine_() % std::uint64_t(hi - lo + 1));
    }
    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller, no spare caching so the state is the engine alone.
    double normal() {
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        return r * std::cos(a);
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }
    void deserialize(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
        if (!is) throw std::runtime_error("bad rng state string");
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace transnet

#endif
