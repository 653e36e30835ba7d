#include "collabevo/evaluation.hpp"

#include "collabevo/errors.hpp"
#include "collabevo/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace collabevo {

std::string_view to_string(Condition condition)
{
    switch (condition) {
    case Condition::local_search_vs_original: return "local_search_vs_original";
    case Condition::automatic_vs_random: return "automatic_vs_random";
    case Condition::collaborative_vs_random: return "collaborative_vs_random";
    }
    return "local_search_vs_original";
}

Condition condition_from_string(std::string_view text)
{
    for (Condition c : {Condition::local_search_vs_original, Condition::automatic_vs_random,
                        Condition::collaborative_vs_random})
        if (to_string(c) == text)
            return c;
    throw InvalidArgument("unknown condition '" + std::string(text) + "'");
}

std::string_view to_string(Side side)
{
    return side == Side::left ? "left" : "right";
}

Side side_from_string(std::string_view text)
{
    if (text == "left")
        return Side::left;
    if (text == "right")
        return Side::right;
    throw InvalidArgument("side must be 'left' or 'right', got '" + std::string(text) + "'");
}

std::vector<PairwiseTrial> build_trials(Condition condition, std::span<const std::string> candidates,
                                        std::span<const std::string> comparators, Rng& rng)
{
    if (candidates.size() != comparators.size())
        throw InvalidArgument("build_trials: " + std::to_string(candidates.size()) + " candidates but " +
                              std::to_string(comparators.size()) + " comparators");
    if (candidates.empty())
        throw InvalidArgument("build_trials: no candidates");
    std::set<std::string> seen;
    for (const auto& id : candidates)
        if (!seen.insert(id).second)
            throw InvalidArgument("build_trials: duplicate image id '" + id + "'");
    for (const auto& id : comparators)
        if (!seen.insert(id).second)
            throw InvalidArgument("build_trials: duplicate image id '" + id + "'");

    std::vector<std::size_t> order(comparators.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.index(i)]);

    const bool start_left = rng.bernoulli(0.5);
    std::vector<PairwiseTrial> trials;
    trials.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        PairwiseTrial t;
        t.trial_id = std::string(to_string(condition)) + "-" + std::to_string(i + 1);
        t.condition = condition;
        t.candidate_side = ((i % 2 == 0) == start_left) ? Side::left : Side::right;
        const auto& candidate = candidates[i];
        const auto& comparator = comparators[order[i]];
        t.left_image_id = t.candidate_side == Side::left ? candidate : comparator;
        t.right_image_id = t.candidate_side == Side::left ? comparator : candidate;
        trials.push_back(std::move(t));
    }
    return trials;
}

bool sides_balanced(std::span<const PairwiseTrial> trials)
{
    std::map<Condition, long> balance;
    for (const auto& t : trials)
        balance[t.condition] += t.candidate_side == Side::left ? 1 : -1;
    return std::all_of(balance.begin(), balance.end(), [](const auto& kv) { return std::abs(kv.second) <= 1; });
}

PreferenceSummary preference_proportions(std::span<const PairwiseTrial> trials,
                                         std::span<const PreferenceResponse> responses)
{
    std::map<std::string, std::size_t> index;
    PreferenceSummary summary;
    for (const auto& t : trials) {
        if (!index.emplace(t.trial_id, summary.trials.size()).second)
            throw DataError("duplicate trial id '" + t.trial_id + "'");
        summary.trials.push_back({t.trial_id, 0, 0, std::nullopt});
    }

    std::set<std::pair<std::string, std::string>> answered;
    for (const auto& r : responses) {
        auto it = index.find(r.trial_id);
        if (it == index.end()) {
            summary.orphans.push_back(r);
            continue;
        }
        if (!answered.emplace(r.trial_id, r.respondent_id).second)
            throw DataError("respondent '" + r.respondent_id + "' answered trial '" + r.trial_id + "' twice");
        auto& tp = summary.trials[it->second];
        ++tp.responses;
        if (r.choice == trials[it->second].candidate_side)
            ++tp.candidate_choices;
    }

    std::vector<double> proportions;
    for (auto& tp : summary.trials) {
        summary.successes += tp.candidate_choices;
        summary.total += tp.responses;
        if (tp.responses > 0) {
            tp.proportion = static_cast<double>(tp.candidate_choices) / static_cast<double>(tp.responses);
            proportions.push_back(*tp.proportion);
        }
    }
    if (!proportions.empty()) {
        const double m = static_cast<double>(proportions.size());
        summary.mean = std::accumulate(proportions.begin(), proportions.end(), 0.0) / m;
        if (proportions.size() > 1) {
            double ss = 0.0;
            for (double p : proportions)
                ss += (p - summary.mean) * (p - summary.mean);
            summary.stderr_mean = std::sqrt(ss / (m - 1.0)) / std::sqrt(m);
        }
    }
    summary.binomial_p = exact_binomial_test(summary.successes, summary.total, 0.5);
    return summary;
}

namespace {

// log(n!) - log(sqrt(2*pi*n) * (n/e)^n)
double stirling_remainder(double n)
{
    constexpr double s0 = 1.0 / 12.0;
    constexpr double s1 = 1.0 / 360.0;
    constexpr double s2 = 1.0 / 1260.0;
    constexpr double s3 = 1.0 / 1680.0;
    constexpr double s4 = 1.0 / 1188.0;
    if (n <= 15.0)
        return std::lgamma(n + 1.0) - (n + 0.5) * std::log(n) + n - 0.5 * std::log(2.0 * std::numbers::pi);
    const double nn = n * n;
    if (n > 500)
        return (s0 - s1 / nn) / n;
    if (n > 80)
        return (s0 - (s1 - s2 / nn) / nn) / n;
    if (n > 35)
        return (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / n;
    return (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / n;
}

// x*log(x/np) + np - x without cancellation when x is close to np.
double deviance(double x, double np)
{
    if (std::abs(x - np) < 0.1 * (x + np)) {
        double v = (x - np) / (x + np);
        double s = (x - np) * v;
        double ej = 2.0 * x * v;
        v *= v;
        for (int j = 1; j < 1000; ++j) {
            ej *= v;
            const double s1 = s + ej / (2 * j + 1);
            if (s1 == s)
                return s1;
            s = s1;
        }
    }
    return x * std::log(x / np) + np - x;
}

} // namespace

double binomial_log_pmf(std::uint64_t k, std::uint64_t n, double p)
{
    if (k > n)
        return -std::numeric_limits<double>::infinity();
    const double q = 1.0 - p;
    const double nd = static_cast<double>(n);
    const double kd = static_cast<double>(k);
    if (k == 0)
        return n == 0 ? 0.0 : (p < 0.1 ? -deviance(nd, nd * q) - nd * p : nd * std::log(q));
    if (k == n)
        return q < 0.1 ? -deviance(nd, nd * p) - nd * q : nd * std::log(p);
    const double lc = stirling_remainder(nd) - stirling_remainder(kd) - stirling_remainder(nd - kd) -
                      deviance(kd, nd * p) - deviance(nd - kd, nd * q);
    const double lf = std::log(2.0 * std::numbers::pi) + std::log(kd) + std::log1p(-kd / nd);
    return lc - 0.5 * lf;
}

double exact_binomial_test(std::uint64_t successes, std::uint64_t n, double p0)
{
    if (successes > n)
        throw InvalidArgument("exact_binomial_test: successes exceed n");
    if (!(p0 > 0.0 && p0 < 1.0))
        throw InvalidArgument("exact_binomial_test: p0 must lie in (0, 1)");
    if (successes == 0)
        return 1.0;

    std::vector<double> logs;
    logs.reserve(n - successes + 1);
    for (std::uint64_t k = successes; k <= n; ++k)
        logs.push_back(binomial_log_pmf(k, n, p0));
    const double peak = *std::max_element(logs.begin(), logs.end());
    double sum = 0.0;
    for (double l : logs)
        sum += std::exp(l - peak);
    return std::min(1.0, std::exp(peak + std::log(sum)));
}

// --- files ------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ','))
        fields.push_back(field);
    if (!line.empty() && line.back() == ',')
        fields.emplace_back();
    return fields;
}

std::vector<std::vector<std::string>> read_csv(std::istream& in, const std::vector<std::string>& header)
{
    std::string line;
    if (!std::getline(in, line))
        throw FormatError("CSV is empty");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (split_csv_line(line) != header)
        throw FormatError("unexpected CSV header '" + line + "'");
    std::vector<std::vector<std::string>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw FormatError("CSV line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                              " fields");
        rows.push_back(std::move(fields));
    }
    return rows;
}

} // namespace

std::vector<PreferenceResponse> read_responses_csv(std::istream& in)
{
    std::vector<PreferenceResponse> out;
    for (auto& row : read_csv(in, {"trial_id", "respondent_id", "choice"}))
        out.push_back({row[0], row[1], side_from_string(row[2])});
    return out;
}

void write_responses_csv(std::span<const PreferenceResponse> responses, std::ostream& out)
{
    out << "trial_id,respondent_id,choice\n";
    for (const auto& r : responses)
        out << r.trial_id << ',' << r.respondent_id << ',' << to_string(r.choice) << '\n';
}

std::vector<PairwiseTrial> read_trials_csv(std::istream& in)
{
    std::vector<PairwiseTrial> out;
    for (auto& row :
         read_csv(in, {"trial_id", "condition", "left_image_id", "right_image_id", "candidate_side"}))
        out.push_back({row[0], condition_from_string(row[1]), row[2], row[3], side_from_string(row[4])});
    return out;
}

void write_trials_csv(std::span<const PairwiseTrial> trials, std::ostream& out)
{
    out << "trial_id,condition,left_image_id,right_image_id,candidate_side\n";
    for (const auto& t : trials)
        out << t.trial_id << ',' << to_string(t.condition) << ',' << t.left_image_id << ',' << t.right_image_id
            << ',' << to_string(t.candidate_side) << '\n';
}

void write_proportions_csv(const PreferenceSummary& summary, std::ostream& out)
{
    out << "trial_id,proportion\n";
    for (const auto& t : summary.trials) {
        out << t.trial_id << ',';
        if (t.proportion)
            out << format_double(*t.proportion);
        out << '\n';
    }
}

nlohmann::json summary_to_json(const PreferenceSummary& s)
{
    nlohmann::json trials = nlohmann::json::array();
    for (const auto& t : s.trials)
        trials.push_back({{"trial_id", t.trial_id},
                          {"candidate_choices", t.candidate_choices},
                          {"responses", t.responses},
                          {"proportion", t.proportion ? nlohmann::json(*t.proportion) : nlohmann::json(nullptr)}});
    nlohmann::json orphans = nlohmann::json::array();
    for (const auto& o : s.orphans)
        orphans.push_back({{"trial_id", o.trial_id}, {"respondent_id", o.respondent_id}});
    return {{"version", 1},
            {"mean", s.mean},
            {"stderr", s.stderr_mean},
            {"successes", s.successes},
            {"total", s.total},
            {"binomial_p", s.binomial_p},
            {"trials", std::move(trials)},
            {"orphans", std::move(orphans)}};
}

nlohmann::json to_json(const PairwiseTrial& t)
{
    return {{"trial_id", t.trial_id},
            {"condition", to_string(t.condition)},
            {"left_image_id", t.left_image_id},
            {"right_image_id", t.right_image_id},
            {"candidate_side", to_string(t.candidate_side)}};
}

PairwiseTrial trial_from_json(const nlohmann::json& doc)
{
    try {
        return {doc.at("trial_id").get<std::string>(),
                condition_from_string(doc.at("condition").get<std::string>()),
                doc.at("left_image_id").get<std::string>(), doc.at("right_image_id").get<std::string>(),
                side_from_string(doc.at("candidate_side").get<std::string>())};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("trial: ") + e.what());
    }
}

} // namespace collabevo
