#include "collabevo/evolution.hpp"

#include "collabevo/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>
#include <set>

namespace collabevo {

namespace {

void check_wheel(std::span<const double> fitness, std::size_t n)
{
    if (n == 0)
        throw InvalidArgument("sus_select: n must be at least 1");
    if (fitness.empty())
        throw InvalidArgument("sus_select: empty population");
    for (std::size_t i = 0; i < fitness.size(); ++i)
        if (!(fitness[i] > 0.0) || !std::isfinite(fitness[i]))
            throw InvalidArgument("sus_select: fitness of member " + std::to_string(i) + " is not positive");
}

} // namespace

std::vector<std::size_t> sus_select_at_offset(std::span<const double> fitness, std::size_t n, double offset)
{
    check_wheel(fitness, n);
    if (!(offset >= 0.0 && offset < 1.0))
        throw InvalidArgument("sus_select: offset must lie in [0, 1)");

    std::vector<double> cumulative(fitness.size());
    double total = 0.0;
    for (std::size_t i = 0; i < fitness.size(); ++i) {
        total += fitness[i];
        cumulative[i] = total;
    }
    const double spacing = total / static_cast<double>(n);

    std::vector<std::size_t> selected;
    selected.reserve(n);
    std::size_t member = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double pointer = (offset + static_cast<double>(k)) * spacing;
        while (member + 1 < cumulative.size() && pointer >= cumulative[member])
            ++member;
        selected.push_back(member);
    }
    return selected;
}

std::vector<std::size_t> sus_select(std::span<const double> fitness, std::size_t n, Rng& rng)
{
    check_wheel(fitness, n);
    return sus_select_at_offset(fitness, n, rng.uniform());
}

std::vector<std::size_t> sus_select(const Population& population, std::size_t n, Rng& rng)
{
    std::vector<double> fitness;
    fitness.reserve(population.size());
    for (const auto& ind : population)
        fitness.push_back(ind.require_fitness());
    return sus_select(fitness, n, rng);
}

LatentVector uniform_crossover(const LatentVector& a, const LatentVector& b, double gene_swap_prob, Rng& rng)
{
    if (a.size() != b.size())
        throw InvalidArgument("uniform_crossover: parents have different lengths");
    LatentVector child = a;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (rng.bernoulli(gene_swap_prob))
            child.set(i, b[i]);
    return child;
}

LocalSearchResult local_search(const LatentVector& start, const AutomaticEvaluator& evaluate,
                               std::size_t generations, double per_gene_rate, Rng& rng)
{
    LocalSearchResult result{start, {}};
    double best = evaluate(start);
    result.trace.initial_score = best;
    result.trace.best_scores.reserve(generations + 1);
    result.trace.best_scores.push_back(best);

    for (std::size_t gen = 0; gen < generations; ++gen) {
        LatentVector child = result.best;
        for (std::size_t i = 0; i < child.size(); ++i)
            if (rng.bernoulli(per_gene_rate))
                child.set(i, child[i] + rng.normal());
        const double score = evaluate(child);
        if (score > best) {
            best = score;
            result.best = std::move(child);
            ++result.trace.accepted_steps;
        }
        result.trace.best_scores.push_back(best);
    }
    return result;
}

Population make_offspring(std::span<const Individual> parents, const RunConfig& config,
                          const AutomaticEvaluator& evaluate, Rng& rng, std::uint32_t generation,
                          std::uint64_t& next_id)
{
    if (parents.empty())
        throw InvalidArgument("make_offspring: no parents");
    config.validate();

    std::set<std::uint64_t> distinct;
    for (const auto& p : parents)
        distinct.insert(p.id);

    Population children;
    children.reserve(config.population_size);
    for (std::size_t c = 0; c < config.population_size; ++c) {
        Individual child;
        child.id = next_id++;
        child.born_generation = generation;

        const Individual& first = parents[rng.index(parents.size())];
        if (rng.bernoulli(config.crossover_prob) && distinct.size() >= 2) {
            std::vector<std::size_t> others;
            for (std::size_t i = 0; i < parents.size(); ++i)
                if (parents[i].id != first.id)
                    others.push_back(i);
            const Individual& second = parents[others[rng.index(others.size())]];
            child.genotype = uniform_crossover(first.genotype, second.genotype, config.gene_swap_prob, rng);
            child.origin = Origin::crossover_child;
        } else {
            child.genotype = first.genotype;
            child.origin = Origin::clone;
        }

        if (rng.bernoulli(config.mutation_prob)) {
            child.genotype = local_search(child.genotype, evaluate, config.local_search_generations,
                                          config.per_gene_mutation_rate, rng)
                                 .best;
            child.origin = Origin::mutated;
        }
        children.push_back(std::move(child));
    }
    return children;
}

DiversityResult enforce_diversity(Population population, double threshold, const AutomaticEvaluator& evaluate,
                                  const RunConfig& config, Rng& rng, std::uint32_t generation,
                                  std::uint64_t& next_id, std::size_t cap)
{
    if (!(threshold >= 0.0))
        throw InvalidArgument("enforce_diversity: threshold must be non-negative");

    DiversityResult result{std::move(population), 0, false};
    auto& pop = result.population;

    auto find_close_pair = [&]() -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < pop.size(); ++i)
            for (std::size_t j = i + 1; j < pop.size(); ++j)
                if (l1_distance(pop[i].genotype, pop[j].genotype) < threshold)
                    return j;
        return std::nullopt;
    };

    while (auto offender = find_close_pair()) {
        if (result.immigrants_inserted >= cap) {
            result.cap_hit = true;
            break;
        }
        Individual immigrant;
        immigrant.id = next_id++;
        immigrant.origin = Origin::immigrant;
        immigrant.born_generation = generation;
        immigrant.genotype = local_search(sample_latent(rng, config.latent_dim), evaluate,
                                          config.local_search_generations, config.per_gene_mutation_rate, rng)
                                 .best;
        pop[*offender] = std::move(immigrant);
        ++result.immigrants_inserted;
    }
    return result;
}

double min_pairwise_distance(const Population& population)
{
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < population.size(); ++i)
        for (std::size_t j = i + 1; j < population.size(); ++j)
            best = std::min(best, l1_distance(population[i].genotype, population[j].genotype));
    return best;
}

void update_hall_of_fame(std::vector<Individual>& hall_of_fame, const Population& evaluated, std::size_t capacity)
{
    for (const auto& ind : evaluated) {
        const double f = ind.require_fitness();
        auto same = std::find_if(hall_of_fame.begin(), hall_of_fame.end(),
                                 [&](const Individual& h) { return h.genotype == ind.genotype; });
        if (same == hall_of_fame.end())
            hall_of_fame.push_back(ind);
        else if (f > *same->fitness)
            *same = ind;
    }
    std::stable_sort(hall_of_fame.begin(), hall_of_fame.end(),
                     [](const Individual& a, const Individual& b) { return *a.fitness > *b.fitness; });
    if (hall_of_fame.size() > capacity)
        hall_of_fame.resize(capacity);
}

void evaluate_population(Population& population, const AutomaticEvaluator& evaluate)
{
    for (auto& ind : population)
        if (!ind.fitness)
            ind.set_fitness(evaluate(ind.genotype));
}

void record_generation(RunState& state)
{
    if (!fully_evaluated(state.population))
        throw InvalidArgument("record_generation: population not fully evaluated");
    if (!state.fitness_history.empty() && state.fitness_history.back().generation >= state.generation)
        throw InvalidArgument("record_generation: generation " + std::to_string(state.generation) +
                              " already recorded");
    auto record = summarize_generation(state.population, state.generation);
    record.immigrants = state.pending_immigrants;
    record.diversity_cap_hit = state.pending_cap_hit;
    state.fitness_history.push_back(std::move(record));
    update_hall_of_fame(state.hall_of_fame, state.population, state.config.hall_of_fame_size);
}

RunState step_generation(RunState state, const AutomaticEvaluator& evaluate)
{
    if (!fully_evaluated(state.population))
        throw InvalidArgument("step_generation: population has unevaluated members");
    const auto& config = state.config;
    update_hall_of_fame(state.hall_of_fame, state.population, config.hall_of_fame_size);

    const auto selected = sus_select(state.population, config.population_size, state.rng);
    std::vector<Individual> parents;
    parents.reserve(selected.size());
    for (std::size_t idx : selected)
        parents.push_back(state.population[idx]);

    const std::uint32_t next_generation = state.generation + 1;
    auto children = make_offspring(parents, config, evaluate, state.rng, next_generation, state.next_id);
    auto diverse = enforce_diversity(std::move(children), config.diversity_threshold, evaluate, config, state.rng,
                                     next_generation, state.next_id);

    state.population = std::move(diverse.population);
    state.pending_immigrants = diverse.immigrants_inserted;
    state.pending_cap_hit = diverse.cap_hit;
    state.generation = next_generation;
    return state;
}

RunState run_automatic(const RunConfig& config, const AutomaticScorer& scorer, const Generator& generator,
                       const GenerationObserver& observer)
{
    const AutomaticEvaluator evaluate(generator, scorer);
    RunState state = initialize_run(config);
    evaluate_population(state.population, evaluate);
    record_generation(state);
    if (observer)
        observer(state);
    for (std::size_t g = 0; g < config.generations; ++g) {
        state = step_generation(std::move(state), evaluate);
        evaluate_population(state.population, evaluate);
        record_generation(state);
        if (observer)
            observer(state);
    }
    return state;
}

std::string format_double(double value)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

void write_fitness_csv(std::span<const GenerationRecord> history, std::ostream& out)
{
    out << "generation,individual_index,fitness,origin,mean,stderr\n";
    for (const auto& record : history)
        for (std::size_t i = 0; i < record.individuals.size(); ++i)
            out << record.generation << ',' << i << ',' << format_double(record.individuals[i].fitness) << ','
                << to_string(record.individuals[i].origin) << ',' << format_double(record.mean) << ','
                << format_double(record.stderr_mean) << '\n';
}

} // namespace collabevo
