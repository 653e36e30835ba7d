#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace collabevo {

/// Seedable, splittable random stream.
///
/// Wraps a 64-bit Mersenne Twister. Every draw constructs a fresh
/// distribution object so no hidden state lives outside the engine; the
/// engine text state is therefore a complete snapshot and a restored
/// stream continues bit-identically.
class Rng
{
public:
    explicit Rng(std::uint64_t seed = 0);

    /// Uniform in [0, 1).
    double uniform();
    /// Standard normal draw.
    double normal();
    /// Uniform index in [0, n). Requires n > 0.
    std::size_t index(std::size_t n);
    /// True with probability p.
    bool bernoulli(double p);

    /// Derives an independent child stream and advances this one.
    Rng split();

    std::string state() const;
    static Rng from_state(std::string_view text);

    std::mt19937_64& engine() noexcept { return engine_; }

    friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace collabevo
