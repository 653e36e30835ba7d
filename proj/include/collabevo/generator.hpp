#pragma once

#include "collabevo/image.hpp"
#include "collabevo/types.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace collabevo {

/// Genotype-to-phenotype mapping. Implementations must return the same image
/// for concurrent and sequential calls with equal input.
class Generator
{
public:
    virtual ~Generator() = default;

    /// Maps a 100-gene latent vector to a 256x144 RGB image in [-1, 1].
    /// Throws InvalidArgument for a wrong-length input, BackendError on inference failure.
    virtual ImageBuffer generate(const LatentVector& z) const = 0;
    virtual std::string describe() const = 0;
};

/// Analytic stand-in for a trained generator.
///
/// The 100 genes form 20 quintuples (a, fx, fy, phase, cshift). At normalized
/// coordinates u = x / 255, v = y / 143 and channel k the pixel is
///
///     tanh( 1/20 * sum_i a_i * sin(2*pi*(fx_i*u + fy_i*v) + phase_i + k*cshift_i) )
///
/// The all-zero latent maps to an all-zero image.
class ProceduralGenerator final : public Generator
{
public:
    static constexpr std::size_t kTerms = 20;

    ImageBuffer generate(const LatentVector& z) const override;
    std::string describe() const override { return "procedural"; }
};

/// Per-pixel bound L such that |G(z) - G(z')| <= L * l1_distance(z, z') for every
/// z' within L1 distance `radius` of z:
///
///     L = max(1, 2*pi*(max_i |a_i| + radius)) / 20
///
/// The partial derivative of the pre-tanh sum is at most 1/20 in an amplitude
/// gene and at most 2*pi*|a_i|/20 in a frequency gene (phase: |a_i|/20,
/// channel shift: 2*|a_i|/20); tanh is 1-Lipschitz.
double procedural_lipschitz_bound(const LatentVector& z, double radius);

/// Externally trained generator in ONNX format: input "z" float[batch,100],
/// output "image" float[batch,3,144,256]. Output is clamped to [-1, 1].
class ModelGenerator final : public Generator
{
public:
    /// Loads and probes the model; throws BackendError if missing or the signature differs.
    explicit ModelGenerator(const std::filesystem::path& model_path);
    ~ModelGenerator() override;

    ImageBuffer generate(const LatentVector& z) const override;
    std::string describe() const override { return "model:" + path_.string(); }

private:
    struct Impl;
    std::filesystem::path path_;
    std::unique_ptr<Impl> impl_;
};

struct GeneratorBackend
{
    enum class Kind { procedural, model };

    Kind kind = Kind::procedural;
    std::optional<std::filesystem::path> model_path;

    /// Parses "procedural" or "model:PATH".
    static GeneratorBackend parse(const std::string& text);
    std::string to_string() const;
};

std::unique_ptr<Generator> make_generator(const GeneratorBackend& backend);

/// Phenotypes keyed by individual id; an entry is recomputed when the stored
/// genotype no longer matches.
class PhenotypeCache
{
public:
    explicit PhenotypeCache(const Generator& generator) : generator_(&generator) {}

    std::shared_ptr<const ImageBuffer> get(const Individual& individual);
    void clear();
    std::size_t size() const;

private:
    struct Entry
    {
        LatentVector genotype;
        std::shared_ptr<const ImageBuffer> image;
    };

    const Generator* generator_;
    mutable std::mutex mutex_;
    std::map<std::uint64_t, Entry> entries_;
};

} // namespace collabevo
