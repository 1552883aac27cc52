#include "trajstitch/rng.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "trajstitch/errors.hpp"

namespace trajstitch {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 over the combined words
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw Error("uniform_int: empty range");
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(next_u64());  // full 64-bit range
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t draw;
    do {
        draw = next_u64();
    } while (draw >= limit);
    return lo + static_cast<std::int64_t>(draw % range);
}

double Rng::normal() {
    // u1 in (0, 1] so log() is finite
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * M_PI * u2);
}

int Rng::geometric(double p) {
    if (!(p > 0.0 && p <= 1.0)) throw Error("geometric: p must be in (0, 1]");
    if (p == 1.0) {
        next_u64();  // keep stream advancement uniform
        return 1;
    }
    const double u = uniform();
    const int k = static_cast<int>(std::floor(std::log1p(-u) / std::log1p(-p))) + 1;
    return k < 1 ? 1 : k;
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void Rng::deserialize(const std::string& text) {
    std::istringstream is(text);
    is >> engine_;
    if (is.fail()) throw IoError("Rng::deserialize: malformed state string");
}

}  // namespace trajstitch
