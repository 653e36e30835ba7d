#include "collabevo/rng.hpp"

#include "collabevo/errors.hpp"

#include <sstream>

namespace collabevo {

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

double Rng::uniform()
{
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    return dist(engine_);
}

double Rng::normal()
{
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(engine_);
}

std::size_t Rng::index(std::size_t n)
{
    if (n == 0)
        throw InvalidArgument("Rng::index: empty range");
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(engine_);
}

bool Rng::bernoulli(double p)
{
    return uniform() < p;
}

Rng Rng::split()
{
    const std::uint64_t a = engine_();
    const std::uint64_t b = engine_();
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    Rng child;
    child.engine_.seed(seq);
    return child;
}

std::string Rng::state() const
{
    std::ostringstream out;
    out << engine_;
    return out.str();
}

Rng Rng::from_state(std::string_view text)
{
    Rng rng;
    std::istringstream in{std::string(text)};
    in >> rng.engine_;
    if (in.fail())
        throw FormatError("rng_state: not a valid generator state");
    return rng;
}

} // namespace collabevo
