#pragma once

#include "collabevo/generator.hpp"
#include "collabevo/scoring.hpp"
#include "collabevo/types.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace collabevo {

/// Generator + automatic scorer composed into a genotype fitness function.
class AutomaticEvaluator
{
public:
    AutomaticEvaluator(const Generator& generator, const AutomaticScorer& scorer)
        : generator_(&generator), scorer_(&scorer)
    {
    }

    double operator()(const LatentVector& z) const { return scorer_->score(generator_->generate(z)); }

    const Generator& generator() const noexcept { return *generator_; }
    const AutomaticScorer& scorer() const noexcept { return *scorer_; }

private:
    const Generator* generator_;
    const AutomaticScorer* scorer_;
};

// --- parent selection -----------------------------------------------------------

/// Stochastic universal sampling: one spin places `n` pointers spaced sum(f)/n
/// apart on the cumulative fitness wheel. Returns selected indices in wheel order.
/// Throws InvalidArgument for n == 0, empty input or any non-positive fitness.
std::vector<std::size_t> sus_select(std::span<const double> fitness, std::size_t n, Rng& rng);

/// SUS with an explicit first-pointer offset, as a fraction in [0, 1) of the pointer spacing.
std::vector<std::size_t> sus_select_at_offset(std::span<const double> fitness, std::size_t n, double offset);

/// Population overload; every member must be evaluated.
std::vector<std::size_t> sus_select(const Population& population, std::size_t n, Rng& rng);

// --- variation -------------------------------------------------------------------

/// Child gene i is b[i] with probability `gene_swap_prob`, otherwise a[i].
LatentVector uniform_crossover(const LatentVector& a, const LatentVector& b, double gene_swap_prob, Rng& rng);

struct LocalSearchTrace
{
    double initial_score = 0.0;
    /// Best score after each generation; element 0 is the initial score.
    std::vector<double> best_scores;
    std::size_t accepted_steps = 0;
};

struct LocalSearchResult
{
    LatentVector best;
    LocalSearchTrace trace;
};

/// (1+1) evolution strategy. Each generation mutates every gene independently
/// with probability `per_gene_rate` by adding a standard-normal draw; the child
/// replaces the parent only on a strictly higher score.
LocalSearchResult local_search(const LatentVector& start, const AutomaticEvaluator& evaluate,
                               std::size_t generations, double per_gene_rate, Rng& rng);

/// Builds `config.population_size` unevaluated children from the selected
/// parents. Ids are drawn from `next_id`; children are stamped with `generation`.
Population make_offspring(std::span<const Individual> parents, const RunConfig& config,
                          const AutomaticEvaluator& evaluate, Rng& rng, std::uint32_t generation,
                          std::uint64_t& next_id);

// --- diversity ----------------------------------------------------------------------

inline constexpr std::size_t kImmigrantCap = 100;

struct DiversityResult
{
    Population population;
    std::uint32_t immigrants_inserted = 0;
    /// Set when the replacement cap was reached with a pair still below threshold.
    bool cap_hit = false;
};

/// Replaces the higher-index member of the first pair (in index order) closer
/// than `threshold` in L1 with a locally searched random immigrant, then
/// rescans, until every pair is at least `threshold` apart or `cap`
/// replacements have been made.
DiversityResult enforce_diversity(Population population, double threshold, const AutomaticEvaluator& evaluate,
                                  const RunConfig& config, Rng& rng, std::uint32_t generation,
                                  std::uint64_t& next_id, std::size_t cap = kImmigrantCap);

/// Smallest pairwise L1 distance (infinity for fewer than two members).
double min_pairwise_distance(const Population& population);

// --- generation loop --------------------------------------------------------------

/// Merges evaluated individuals into the archive: one entry per genotype (the
/// higher fitness wins), sorted by fitness descending, truncated to `capacity`.
void update_hall_of_fame(std::vector<Individual>& hall_of_fame, const Population& evaluated,
                         std::size_t capacity);

/// Scores every unevaluated member with the automatic evaluator, in index order.
void evaluate_population(Population& population, const AutomaticEvaluator& evaluate);

/// Appends the current generation's summary and folds it into the hall of fame.
/// Throws InvalidArgument if the population is not fully evaluated or the
/// generation is already recorded.
void record_generation(RunState& state);

/// Hall of fame update, SUS, offspring, diversity enforcement; the new
/// population replaces the old one entirely and is unevaluated.
RunState step_generation(RunState state, const AutomaticEvaluator& evaluate);

using GenerationObserver = std::function<void(const RunState&)>;

/// Random initial population evaluated and stepped `config.generations` times;
/// the history holds generations + 1 records. `observer`, when set, sees the
/// state after each generation is evaluated and recorded.
RunState run_automatic(const RunConfig& config, const AutomaticScorer& scorer, const Generator& generator,
                       const GenerationObserver& observer = {});

/// Columns: generation, individual_index, fitness, origin, mean, stderr.
void write_fitness_csv(std::span<const GenerationRecord> history, std::ostream& out);

/// Shortest decimal form that round-trips.
std::string format_double(double value);

} // namespace collabevo
