#include "collabevo/types.hpp"

#include "collabevo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace collabevo {

namespace {

void require_finite(double value, std::size_t index)
{
    if (!std::isfinite(value))
        throw InvalidArgument("latent gene " + std::to_string(index) + " is not finite");
}

void require_probability(std::string_view field, double value)
{
    if (!(value >= 0.0 && value <= 1.0))
        throw ConfigError(std::string(field), "must lie in [0, 1]");
}

void require_positive(std::string_view field, std::size_t value)
{
    if (value < 1)
        throw ConfigError(std::string(field), "must be at least 1");
}

} // namespace

LatentVector::LatentVector(std::vector<double> genes) : genes_(std::move(genes))
{
    if (genes_.empty())
        throw InvalidArgument("latent vector must not be empty");
    for (std::size_t i = 0; i < genes_.size(); ++i)
        require_finite(genes_[i], i);
}

LatentVector LatentVector::zeros(std::size_t dim)
{
    return filled(0.0, dim);
}

LatentVector LatentVector::filled(double value, std::size_t dim)
{
    return LatentVector(std::vector<double>(dim, value));
}

void LatentVector::set(std::size_t i, double value)
{
    require_finite(value, i);
    genes_.at(i) = value;
}

LatentVector sample_latent(Rng& rng, std::size_t dim)
{
    std::vector<double> genes(dim);
    for (auto& g : genes)
        g = rng.normal();
    return LatentVector(std::move(genes));
}

double l1_distance(const LatentVector& a, const LatentVector& b)
{
    if (a.size() != b.size())
        throw InvalidArgument("l1_distance: incompatible genotypes (" + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + " genes)");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        sum += std::abs(a[i] - b[i]);
    return sum;
}

std::string_view to_string(Origin origin)
{
    switch (origin) {
    case Origin::random: return "random";
    case Origin::crossover_child: return "crossover-child";
    case Origin::clone: return "clone";
    case Origin::mutated: return "mutated";
    case Origin::immigrant: return "immigrant";
    }
    return "random";
}

Origin origin_from_string(std::string_view text)
{
    for (Origin o : {Origin::random, Origin::crossover_child, Origin::clone, Origin::mutated, Origin::immigrant})
        if (to_string(o) == text)
            return o;
    throw FormatError("unknown origin '" + std::string(text) + "'");
}

void Individual::set_fitness(double value)
{
    if (!(value >= kMinFitness && value <= kMaxFitness))
        throw InvalidArgument("fitness " + std::to_string(value) + " outside [1, 10]");
    fitness = value;
}

double Individual::require_fitness() const
{
    if (!fitness)
        throw InvalidArgument("individual " + std::to_string(id) + " is unevaluated");
    return *fitness;
}

void RunConfig::validate() const
{
    require_positive("population_size", population_size);
    require_positive("latent_dim", latent_dim);
    require_positive("hall_of_fame_size", hall_of_fame_size);
    require_positive("participants", participants);
    require_probability("crossover_prob", crossover_prob);
    require_probability("gene_swap_prob", gene_swap_prob);
    require_probability("mutation_prob", mutation_prob);
    require_probability("per_gene_mutation_rate", per_gene_mutation_rate);
    if (!(diversity_threshold >= 0.0) || !std::isfinite(diversity_threshold))
        throw ConfigError("diversity_threshold", "must be a finite non-negative number");
}

GenerationRecord summarize_generation(const Population& population, std::uint32_t generation)
{
    GenerationRecord record;
    record.generation = generation;
    record.individuals.reserve(population.size());
    for (const auto& ind : population)
        record.individuals.push_back({ind.id, ind.require_fitness(), ind.origin});

    const auto n = static_cast<double>(population.size());
    if (population.empty())
        return record;
    double sum = 0.0;
    for (const auto& f : record.individuals)
        sum += f.fitness;
    record.mean = sum / n;
    if (population.size() > 1) {
        double ss = 0.0;
        for (const auto& f : record.individuals)
            ss += (f.fitness - record.mean) * (f.fitness - record.mean);
        record.stderr_mean = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    return record;
}

void RunState::validate() const
{
    config.validate();
    if (population.size() != config.population_size)
        throw InvalidArgument("population has " + std::to_string(population.size()) + " members, expected " +
                              std::to_string(config.population_size));
    std::unordered_set<std::uint64_t> ids;
    for (const auto& ind : population) {
        if (!ids.insert(ind.id).second)
            throw InvalidArgument("duplicate individual id " + std::to_string(ind.id));
        if (ind.genotype.size() != config.latent_dim)
            throw InvalidArgument("individual " + std::to_string(ind.id) + " has wrong genotype length");
        if (ind.fitness && !(*ind.fitness >= kMinFitness && *ind.fitness <= kMaxFitness))
            throw InvalidArgument("individual " + std::to_string(ind.id) + " fitness outside [1, 10]");
    }
    if (hall_of_fame.size() > config.hall_of_fame_size)
        throw InvalidArgument("hall of fame exceeds configured size");
    for (std::size_t i = 0; i < hall_of_fame.size(); ++i) {
        const double f = hall_of_fame[i].require_fitness();
        if (i > 0 && f > hall_of_fame[i - 1].require_fitness())
            throw InvalidArgument("hall of fame not sorted by fitness");
        for (std::size_t j = 0; j < i; ++j)
            if (hall_of_fame[j].genotype == hall_of_fame[i].genotype)
                throw InvalidArgument("hall of fame contains duplicate genotypes");
    }
}

RunState initialize_run(const RunConfig& config)
{
    config.validate();
    RunState state;
    state.config = config;
    state.rng = Rng(config.seed);
    state.population.reserve(config.population_size);
    for (std::size_t i = 0; i < config.population_size; ++i) {
        Individual ind;
        ind.id = state.allocate_id();
        ind.genotype = sample_latent(state.rng, config.latent_dim);
        ind.origin = Origin::random;
        ind.born_generation = 0;
        state.population.push_back(std::move(ind));
    }
    return state;
}

bool fully_evaluated(const Population& population)
{
    return std::all_of(population.begin(), population.end(), [](const Individual& i) { return i.fitness.has_value(); });
}

} // namespace collabevo
