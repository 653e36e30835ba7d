#pragma once

#include "collabevo/evaluation.hpp"
#include "collabevo/evolution.hpp"
#include "collabevo/generator.hpp"
#include "collabevo/scoring.hpp"
#include "collabevo/types.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace collabevo {

enum class SessionMode { collaborative, automatic };
enum class SessionStatus { awaiting_ratings, stepping, finished };

std::string_view to_string(SessionMode mode);
SessionMode session_mode_from_string(std::string_view text);
std::string_view to_string(SessionStatus status);

/// Failure surfaced to service clients. `code()` is a stable machine-readable
/// token; `http_status()` the matching response status.
class ServiceError : public Error
{
public:
    ServiceError(int http_status, std::string code, const std::string& message)
        : Error(message), http_status_(http_status), code_(std::move(code))
    {
    }

    int http_status() const noexcept { return http_status_; }
    const std::string& code() const noexcept { return code_; }

private:
    int http_status_;
    std::string code_;
};

struct ServiceOptions
{
    std::string bind_address = "127.0.0.1";
    int port = 8080;
    std::filesystem::path data_dir = "collabevo-data";
    GeneratorBackend generator;
    ScorerBackend scorer;
};

/// Reads the service config document (optional path) and applies
/// COLLABEVO_BIND, COLLABEVO_PORT, COLLABEVO_DATA_DIR, COLLABEVO_GENERATOR and
/// COLLABEVO_SCORER overrides. `getenv` is injectable for tests.
ServiceOptions load_service_options(const std::optional<std::filesystem::path>& path,
                                    const std::function<std::optional<std::string>(const char*)>& getenv);

/// Opaque image id for an individual.
std::string image_id_for(const Individual& individual);

struct GenerationView
{
    std::uint32_t generation = 0;
    SessionStatus status = SessionStatus::awaiting_ratings;
    std::vector<std::string> image_ids;
    std::vector<std::string> pending_participants;
};

struct SubmitResult
{
    bool accepted = false;
    bool generation_advanced = false;
    std::uint32_t generation = 0;
    SessionStatus status = SessionStatus::awaiting_ratings;
};

struct ResultsView
{
    SessionStatus status = SessionStatus::awaiting_ratings;
    std::vector<GenerationRecord> fitness_history;
    std::vector<Individual> hall_of_fame;
    /// generation -> image id -> aggregate of the stored ballots
    std::map<std::uint32_t, std::map<std::string, FitnessRecord>> fitness_records;
};

/// Immutable view published after every accepted write.
struct SessionSnapshot
{
    std::string session_id;
    SessionMode mode = SessionMode::collaborative;
    std::vector<std::string> roster;
    SessionStatus status = SessionStatus::awaiting_ratings;
    RunState state;
    std::map<std::string, RatingBallot> current_ballots;
    std::map<std::uint32_t, std::map<std::string, FitnessRecord>> fitness_records;
};

/// Collaborative and automatic evolution sessions plus pairwise evaluations,
/// persisted under `data_dir`:
///
///     sessions/<id>/session.json       mode, roster
///     sessions/<id>/state-NNNN.json    run state at the start of generation NNNN
///     sessions/<id>/final.json         evaluated state of a finished run
///     sessions/<id>/ballots.log        append-only ballot / rollback records (JSON lines)
///     evaluations/<id>.json            trials and responses
///
/// Writes to one session are serialized by its lock; reads use the last
/// published snapshot and never wait on a step in progress.
class SessionManager
{
public:
    /// Loads every persisted session and evaluation, finishing any step that a
    /// crash interrupted after the last ballot of a generation was logged.
    SessionManager(std::filesystem::path data_dir, const Generator& generator, const AutomaticScorer& scorer);
    ~SessionManager();

    SessionManager(const SessionManager&) = delete;
    SessionManager& operator=(const SessionManager&) = delete;

    std::string create_session(const RunConfig& config, const std::vector<std::string>& roster, SessionMode mode);
    std::vector<std::string> session_ids() const;

    GenerationView get_generation(const std::string& session_id) const;
    /// x8 upsampled PNG of a current-population or hall-of-fame image.
    std::vector<std::uint8_t> image_png(const std::string& session_id, const std::string& image_id) const;
    SubmitResult submit_ballot(const std::string& session_id, const RatingBallot& ballot);
    ResultsView get_results(const std::string& session_id) const;
    /// Discards every ballot of the current generation.
    std::size_t rollback(const std::string& session_id, std::optional<std::uint32_t> generation);

    std::shared_ptr<const SessionSnapshot> snapshot(const std::string& session_id) const;

    std::string create_evaluation(Condition condition, const std::vector<std::string>& candidates,
                                  const std::vector<std::string>& comparators, std::uint64_t seed);
    std::vector<PairwiseTrial> evaluation_trials(const std::string& evaluation_id) const;
    /// Stores a batch atomically; rejects unknown trials and repeated (trial, respondent) pairs.
    std::size_t submit_responses(const std::string& evaluation_id, const std::vector<PreferenceResponse>& responses);
    PreferenceSummary evaluation_summary(const std::string& evaluation_id) const;

private:
    struct Session;
    struct Evaluation;

    Session& session(const std::string& id) const;
    Evaluation& evaluation(const std::string& id) const;
    void load_sessions();
    void load_evaluations();

    std::filesystem::path data_dir_;
    const Generator* generator_;
    const AutomaticScorer* scorer_;
    AutomaticEvaluator evaluator_;

    mutable std::shared_mutex registry_mutex_;
    std::map<std::string, std::unique_ptr<Session>> sessions_;
    std::map<std::string, std::unique_ptr<Evaluation>> evaluations_;

    mutable std::mutex png_mutex_;
    mutable std::map<std::string, std::shared_ptr<const std::vector<std::uint8_t>>> png_cache_;
};

} // namespace collabevo
