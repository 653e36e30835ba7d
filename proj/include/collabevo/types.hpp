#pragma once

#include "collabevo/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace collabevo {

inline constexpr std::size_t kLatentDim = 100;
inline constexpr double kMinFitness = 1.0;
inline constexpr double kMaxFitness = 10.0;

/// Genotype: a fixed-length vector of finite real genes.
class LatentVector
{
public:
    LatentVector() = default;
    /// Throws InvalidArgument on an empty vector or a non-finite gene.
    explicit LatentVector(std::vector<double> genes);

    static LatentVector zeros(std::size_t dim = kLatentDim);
    static LatentVector filled(double value, std::size_t dim = kLatentDim);

    std::size_t size() const noexcept { return genes_.size(); }
    double operator[](std::size_t i) const { return genes_[i]; }
    std::span<const double> genes() const noexcept { return genes_; }

    /// Replaces one gene; rejects non-finite values.
    void set(std::size_t i, double value);

    friend bool operator==(const LatentVector&, const LatentVector&) = default;

private:
    std::vector<double> genes_;
};

/// Draws `dim` independent standard-normal genes.
LatentVector sample_latent(Rng& rng, std::size_t dim = kLatentDim);

/// Sum of absolute gene differences. Throws InvalidArgument on length mismatch.
double l1_distance(const LatentVector& a, const LatentVector& b);

enum class Origin { random, crossover_child, clone, mutated, immigrant };

std::string_view to_string(Origin origin);
Origin origin_from_string(std::string_view text);

struct Individual
{
    std::uint64_t id = 0;
    LatentVector genotype;
    std::optional<double> fitness;
    Origin origin = Origin::random;
    std::uint32_t born_generation = 0;

    /// Sets fitness; throws InvalidArgument outside [1, 10].
    void set_fitness(double value);
    /// Fitness, or InvalidArgument if unevaluated.
    double require_fitness() const;
};

/// Members in index order. The configured size is enforced by RunState validation.
using Population = std::vector<Individual>;

struct RunConfig
{
    std::size_t population_size = 15;
    std::size_t generations = 25;
    std::size_t latent_dim = kLatentDim;
    double crossover_prob = 0.5;
    double gene_swap_prob = 0.25;
    double mutation_prob = 0.5;
    double per_gene_mutation_rate = 0.01;
    std::size_t local_search_generations = 100;
    double diversity_threshold = 25.0;
    std::size_t hall_of_fame_size = 10;
    std::size_t participants = 5;
    std::uint64_t seed = 0;

    /// Throws ConfigError naming the first invalid field. Counts must be at
    /// least 1, except `generations` and `local_search_generations` (>= 0).
    void validate() const;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct IndividualFitness
{
    std::uint64_t id = 0;
    double fitness = 0.0;
    Origin origin = Origin::random;

    friend bool operator==(const IndividualFitness&, const IndividualFitness&) = default;
};

/// Summary of one evaluated generation.
struct GenerationRecord
{
    std::uint32_t generation = 0;
    double mean = 0.0;
    /// Standard error of the mean (sample SD / sqrt(n)).
    double stderr_mean = 0.0;
    std::vector<IndividualFitness> individuals;
    std::uint32_t immigrants = 0;
    bool diversity_cap_hit = false;

    friend bool operator==(const GenerationRecord&, const GenerationRecord&) = default;
};

/// Mean and standard error over the population's fitness; all members must be evaluated.
GenerationRecord summarize_generation(const Population& population, std::uint32_t generation);

struct RunState
{
    RunConfig config;
    std::uint32_t generation = 0;
    Population population;
    std::vector<Individual> hall_of_fame;
    Rng rng;
    std::vector<GenerationRecord> fitness_history;
    std::uint64_t next_id = 1;
    /// Immigrants inserted while building the current population.
    std::uint32_t pending_immigrants = 0;
    bool pending_cap_hit = false;

    std::uint64_t allocate_id() { return next_id++; }

    /// Checks population size, id uniqueness, fitness bounds and hall-of-fame ordering.
    void validate() const;
};

/// Fresh run: generation 0 with a random, unevaluated population drawn from `config.seed`.
RunState initialize_run(const RunConfig& config);

bool fully_evaluated(const Population& population);

} // namespace collabevo
