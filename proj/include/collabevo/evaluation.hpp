#pragma once

#include "collabevo/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace collabevo {

enum class Condition { local_search_vs_original, automatic_vs_random, collaborative_vs_random };
enum class Side { left, right };

std::string_view to_string(Condition condition);
Condition condition_from_string(std::string_view text);
std::string_view to_string(Side side);
Side side_from_string(std::string_view text);

struct PairwiseTrial
{
    std::string trial_id;
    Condition condition = Condition::local_search_vs_original;
    std::string left_image_id;
    std::string right_image_id;
    Side candidate_side = Side::left;

    const std::string& candidate_id() const { return candidate_side == Side::left ? left_image_id : right_image_id; }

    friend bool operator==(const PairwiseTrial&, const PairwiseTrial&) = default;
};

struct PreferenceResponse
{
    std::string trial_id;
    std::string respondent_id;
    Side choice = Side::left;

    friend bool operator==(const PreferenceResponse&, const PreferenceResponse&) = default;
};

/// One trial per candidate, in candidate order. Comparators are paired by a
/// seeded permutation; the candidate side alternates from a seeded start so
/// left/right counts differ by at most one.
/// Throws InvalidArgument on length mismatch, empty input or repeated ids.
std::vector<PairwiseTrial> build_trials(Condition condition, std::span<const std::string> candidates,
                                        std::span<const std::string> comparators, Rng& rng);

/// |#candidate-left - #candidate-right| <= 1 for every condition present.
bool sides_balanced(std::span<const PairwiseTrial> trials);

struct TrialProportion
{
    std::string trial_id;
    std::size_t candidate_choices = 0;
    std::size_t responses = 0;
    /// Fraction choosing the candidate; empty when the trial has no responses.
    std::optional<double> proportion;
};

struct PreferenceSummary
{
    std::vector<TrialProportion> trials;
    /// Mean of per-trial proportions over trials with responses.
    double mean = 0.0;
    /// Sample SD of per-trial proportions / sqrt(#trials); 0 for a single trial.
    double stderr_mean = 0.0;
    std::size_t successes = 0;
    std::size_t total = 0;
    /// One-sided exact binomial p-value of successes out of total against 0.5.
    double binomial_p = 1.0;
    /// Responses naming an unknown trial; excluded from every statistic.
    std::vector<PreferenceResponse> orphans;
};

/// Throws DataError when a respondent answers the same trial twice.
PreferenceSummary preference_proportions(std::span<const PairwiseTrial> trials,
                                         std::span<const PreferenceResponse> responses);

/// log P(X = k) for X ~ Binomial(n, p), via the saddle-point expansion
/// (Stirling remainders and the deviance term) so large n keeps full precision.
double binomial_log_pmf(std::uint64_t k, std::uint64_t n, double p);

/// P(X >= successes | X ~ Binomial(n, p0)), one-sided upper tail, summed
/// exactly in log space. Throws InvalidArgument unless
/// successes <= n and 0 < p0 < 1.
double exact_binomial_test(std::uint64_t successes, std::uint64_t n, double p0);

// --- files ------------------------------------------------------------------------

/// Header: trial_id,respondent_id,choice
std::vector<PreferenceResponse> read_responses_csv(std::istream& in);
void write_responses_csv(std::span<const PreferenceResponse> responses, std::ostream& out);

/// Header: trial_id,condition,left_image_id,right_image_id,candidate_side
std::vector<PairwiseTrial> read_trials_csv(std::istream& in);
void write_trials_csv(std::span<const PairwiseTrial> trials, std::ostream& out);

/// Header: trial_id,proportion (empty proportion for unanswered trials)
void write_proportions_csv(const PreferenceSummary& summary, std::ostream& out);
nlohmann::json summary_to_json(const PreferenceSummary& summary);

nlohmann::json to_json(const PairwiseTrial& trial);
PairwiseTrial trial_from_json(const nlohmann::json& doc);

} // namespace collabevo
