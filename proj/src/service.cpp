#include "collabevo/service.hpp"

#include "collabevo/errors.hpp"
#include "collabevo/serialization.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace collabevo {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(SessionMode mode)
{
    return mode == SessionMode::collaborative ? "collaborative" : "automatic";
}

SessionMode session_mode_from_string(std::string_view text)
{
    if (text == "collaborative")
        return SessionMode::collaborative;
    if (text == "automatic")
        return SessionMode::automatic;
    throw ServiceError(422, "invalid_mode", "mode must be 'collaborative' or 'automatic'");
}

std::string_view to_string(SessionStatus status)
{
    switch (status) {
    case SessionStatus::awaiting_ratings: return "awaiting_ratings";
    case SessionStatus::stepping: return "stepping";
    case SessionStatus::finished: return "finished";
    }
    return "awaiting_ratings";
}

std::string image_id_for(const Individual& individual)
{
    return std::to_string(individual.id);
}

ServiceOptions load_service_options(const std::optional<fs::path>& path,
                                    const std::function<std::optional<std::string>(const char*)>& getenv)
{
    ServiceOptions opts;
    if (path) {
        json doc;
        try {
            doc = json::parse(read_file(*path));
        } catch (const json::parse_error& e) {
            throw ConfigError(path->string(), e.what());
        }
        if (doc.value("version", kDocumentVersion) != kDocumentVersion)
            throw ConfigError("version", "unsupported service config version");
        try {
            opts.bind_address = doc.value("bind", opts.bind_address);
            opts.port = doc.value("port", opts.port);
            opts.data_dir = doc.value("data_dir", opts.data_dir.string());
            if (doc.contains("generator"))
                opts.generator = GeneratorBackend::parse(doc.at("generator").get<std::string>());
            if (doc.contains("scorer"))
                opts.scorer = ScorerBackend::parse(doc.at("scorer").get<std::string>());
        } catch (const json::exception& e) {
            throw ConfigError(path->string(), e.what());
        }
    }
    if (auto v = getenv("COLLABEVO_BIND"))
        opts.bind_address = *v;
    if (auto v = getenv("COLLABEVO_PORT")) {
        try {
            opts.port = std::stoi(*v);
        } catch (const std::exception&) {
            throw ConfigError("COLLABEVO_PORT", "not an integer");
        }
    }
    if (auto v = getenv("COLLABEVO_DATA_DIR"))
        opts.data_dir = *v;
    if (auto v = getenv("COLLABEVO_GENERATOR"))
        opts.generator = GeneratorBackend::parse(*v);
    if (auto v = getenv("COLLABEVO_SCORER"))
        opts.scorer = ScorerBackend::parse(*v);
    if (opts.port <= 0 || opts.port > 65535)
        throw ConfigError("port", "must lie in 1..65535");
    return opts;
}

namespace {

std::string random_id(char prefix)
{
    static std::mutex mutex;
    static std::random_device device;
    std::lock_guard lock(mutex);
    const std::uint64_t value = (static_cast<std::uint64_t>(device()) << 32) | device();
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%c%016llx", prefix, static_cast<unsigned long long>(value));
    return buf;
}

fs::path state_file(const fs::path& dir, std::uint32_t generation)
{
    char name[32];
    std::snprintf(name, sizeof(name), "state-%04u.json", generation);
    return dir / name;
}

// Appends one line and syncs it to disk before returning.
void append_durable(const fs::path& path, const std::string& line)
{
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0)
        throw Error("cannot open " + path.string());
    const std::string data = line + "\n";
    const char* p = data.data();
    std::size_t left = data.size();
    while (left > 0) {
        const ssize_t n = ::write(fd, p, left);
        if (n < 0) {
            ::close(fd);
            throw Error("write failed for " + path.string());
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
}

json ballot_to_json(const RatingBallot& b)
{
    return {{"type", "ballot"}, {"generation", b.generation}, {"participant_id", b.participant_id},
            {"ratings", b.ratings}};
}

RatingBallot ballot_from_json(const json& doc)
{
    RatingBallot b;
    b.participant_id = doc.at("participant_id").get<std::string>();
    b.generation = doc.at("generation").get<std::uint32_t>();
    b.ratings = doc.at("ratings").get<std::map<std::string, int>>();
    return b;
}

std::vector<std::string> population_image_ids(const Population& population)
{
    std::vector<std::string> ids;
    ids.reserve(population.size());
    for (const auto& ind : population)
        ids.push_back(image_id_for(ind));
    return ids;
}

void check_roster(const std::vector<std::string>& roster, const RunConfig& config, SessionMode mode)
{
    std::set<std::string> unique;
    for (const auto& p : roster) {
        if (p.empty())
            throw ServiceError(422, "invalid_roster", "roster: participant ids must be non-empty");
        if (!unique.insert(p).second)
            throw ServiceError(422, "invalid_roster", "roster: duplicate participant id '" + p + "'");
    }
    if (mode == SessionMode::collaborative && roster.size() != config.participants)
        throw ServiceError(422, "invalid_roster",
                           "roster: expected " + std::to_string(config.participants) + " participants, got " +
                               std::to_string(roster.size()));
}

} // namespace

struct SessionManager::Session
{
    std::mutex write_mutex;
    mutable std::mutex publish_mutex;
    std::shared_ptr<const SessionSnapshot> published;
    SessionSnapshot working;
    fs::path dir;

    std::shared_ptr<const SessionSnapshot> view() const
    {
        std::lock_guard lock(publish_mutex);
        return published;
    }

    void publish()
    {
        auto snap = std::make_shared<const SessionSnapshot>(working);
        std::lock_guard lock(publish_mutex);
        published = std::move(snap);
    }

    fs::path log_path() const { return dir / "ballots.log"; }
};

struct SessionManager::Evaluation
{
    std::mutex mutex;
    std::string id;
    std::vector<PairwiseTrial> trials;
    std::vector<PreferenceResponse> responses;
    fs::path file;

    void save() const
    {
        json trials_doc = json::array();
        for (const auto& t : trials)
            trials_doc.push_back(to_json(t));
        json responses_doc = json::array();
        for (const auto& r : responses)
            responses_doc.push_back(
                {{"trial_id", r.trial_id}, {"respondent_id", r.respondent_id}, {"choice", to_string(r.choice)}});
        write_file_atomic(file, json{{"version", kDocumentVersion},
                                     {"evaluation_id", id},
                                     {"trials", std::move(trials_doc)},
                                     {"responses", std::move(responses_doc)}}
                                    .dump(2));
    }
};

namespace {

// Aggregates the complete ballot set, assigns fitness, and either finishes the
// run or steps to the next generation. Caller holds the write lock.
template <typename PublishFn>
void advance(SessionSnapshot& w, const fs::path& dir, const AutomaticEvaluator& evaluator, PublishFn&& publish)
{
    const auto ids = population_image_ids(w.state.population);
    std::vector<RatingBallot> ballots;
    for (const auto& [_, b] : w.current_ballots)
        ballots.push_back(b);
    auto records = aggregate_ratings(ballots, w.state.generation, w.roster, ids);
    for (auto& ind : w.state.population)
        ind.set_fitness(records.at(image_id_for(ind)).mean);
    record_generation(w.state);
    w.fitness_records[w.state.generation] = std::move(records);
    w.current_ballots.clear();

    if (w.state.generation >= w.state.config.generations) {
        w.status = SessionStatus::finished;
        save_run_state(w.state, dir / "final.json");
        publish();
        return;
    }
    w.status = SessionStatus::stepping;
    publish();
    RunState next = step_generation(w.state, evaluator);
    save_run_state(next, state_file(dir, next.generation));
    w.state = std::move(next);
    w.status = SessionStatus::awaiting_ratings;
    publish();
}

} // namespace

SessionManager::SessionManager(fs::path data_dir, const Generator& generator, const AutomaticScorer& scorer)
    : data_dir_(std::move(data_dir)), generator_(&generator), scorer_(&scorer), evaluator_(generator, scorer)
{
    fs::create_directories(data_dir_ / "sessions");
    fs::create_directories(data_dir_ / "evaluations");
    load_sessions();
    load_evaluations();
}

SessionManager::~SessionManager() = default;

void SessionManager::load_sessions()
{
    for (const auto& entry : fs::directory_iterator(data_dir_ / "sessions")) {
        if (!entry.is_directory() || !fs::exists(entry.path() / "session.json"))
            continue;
        auto session = std::make_unique<Session>();
        session->dir = entry.path();
        auto& w = session->working;
        const json meta = json::parse(read_file(entry.path() / "session.json"));
        w.session_id = meta.at("session_id").get<std::string>();
        w.mode = session_mode_from_string(meta.at("mode").get<std::string>());
        w.roster = meta.at("roster").get<std::vector<std::string>>();

        // Replay the ballot log: completed generations become fitness records,
        // the latest generation's ballots stay pending.
        std::map<std::uint32_t, std::map<std::string, RatingBallot>> by_generation;
        if (fs::exists(session->log_path())) {
            std::ifstream log(session->log_path());
            std::string line;
            while (std::getline(log, line)) {
                if (line.empty())
                    continue;
                json rec;
                try {
                    rec = json::parse(line);
                } catch (const json::parse_error&) {
                    break; // torn final line from a crash mid-append
                }
                const auto gen = rec.at("generation").get<std::uint32_t>();
                if (rec.at("type") == "rollback")
                    by_generation.erase(gen);
                else {
                    auto ballot = ballot_from_json(rec);
                    by_generation[gen].emplace(ballot.participant_id, std::move(ballot));
                }
            }
        }

        const bool finished = fs::exists(entry.path() / "final.json");
        if (finished) {
            w.state = load_run_state(entry.path() / "final.json");
            w.status = SessionStatus::finished;
        } else {
            std::uint32_t latest = 0;
            for (const auto& f : fs::directory_iterator(entry.path())) {
                unsigned g = 0;
                if (std::sscanf(f.path().filename().c_str(), "state-%u.json", &g) == 1)
                    latest = std::max(latest, static_cast<std::uint32_t>(g));
            }
            w.state = load_run_state(state_file(entry.path(), latest));
            w.status = SessionStatus::awaiting_ratings;
        }

        for (auto& [gen, ballots] : by_generation) {
            if (!finished && gen == w.state.generation) {
                w.current_ballots = std::move(ballots);
                continue;
            }
            std::vector<RatingBallot> list;
            for (auto& [_, b] : ballots)
                list.push_back(b);
            if (list.empty())
                continue;
            std::vector<std::string> ids;
            for (const auto& [id, _] : list.front().ratings)
                ids.push_back(id);
            w.fitness_records[gen] = aggregate_ratings(list, gen, w.roster, ids);
        }

        if (w.mode == SessionMode::collaborative && w.status == SessionStatus::awaiting_ratings &&
            w.current_ballots.size() == w.roster.size())
            advance(w, session->dir, evaluator_, [] {});
        session->publish();
        sessions_.emplace(w.session_id, std::move(session));
    }
}

void SessionManager::load_evaluations()
{
    for (const auto& entry : fs::directory_iterator(data_dir_ / "evaluations")) {
        if (entry.path().extension() != ".json")
            continue;
        const json doc = json::parse(read_file(entry.path()));
        auto ev = std::make_unique<Evaluation>();
        ev->id = doc.at("evaluation_id").get<std::string>();
        ev->file = entry.path();
        for (const auto& t : doc.at("trials"))
            ev->trials.push_back(trial_from_json(t));
        for (const auto& r : doc.at("responses"))
            ev->responses.push_back({r.at("trial_id").get<std::string>(), r.at("respondent_id").get<std::string>(),
                                     side_from_string(r.at("choice").get<std::string>())});
        evaluations_.emplace(ev->id, std::move(ev));
    }
}

SessionManager::Session& SessionManager::session(const std::string& id) const
{
    std::shared_lock lock(registry_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end())
        throw ServiceError(404, "not_found", "unknown session '" + id + "'");
    return *it->second;
}

SessionManager::Evaluation& SessionManager::evaluation(const std::string& id) const
{
    std::shared_lock lock(registry_mutex_);
    auto it = evaluations_.find(id);
    if (it == evaluations_.end())
        throw ServiceError(404, "not_found", "unknown evaluation '" + id + "'");
    return *it->second;
}

std::string SessionManager::create_session(const RunConfig& config, const std::vector<std::string>& roster,
                                           SessionMode mode)
{
    try {
        config.validate();
    } catch (const ConfigError& e) {
        throw ServiceError(422, "invalid_config", std::string("config.") + e.what());
    }
    check_roster(roster, config, mode);

    auto session = std::make_unique<Session>();
    auto& w = session->working;
    w.session_id = random_id('s');
    w.mode = mode;
    w.roster = roster;
    session->dir = data_dir_ / "sessions" / w.session_id;
    fs::create_directories(session->dir);

    if (mode == SessionMode::automatic) {
        save_run_state(initialize_run(config), state_file(session->dir, 0));
        w.state = run_automatic(config, *scorer_, *generator_);
        save_run_state(w.state, session->dir / "final.json");
        w.status = SessionStatus::finished;
    } else {
        w.state = initialize_run(config);
        save_run_state(w.state, state_file(session->dir, 0));
        w.status = SessionStatus::awaiting_ratings;
    }
    write_file_atomic(session->dir / "session.json",
                      json{{"version", kDocumentVersion},
                           {"session_id", w.session_id},
                           {"mode", to_string(mode)},
                           {"roster", roster}}
                          .dump(2));
    session->publish();

    const std::string id = w.session_id;
    std::unique_lock lock(registry_mutex_);
    sessions_.emplace(id, std::move(session));
    return id;
}

std::vector<std::string> SessionManager::session_ids() const
{
    std::shared_lock lock(registry_mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, _] : sessions_)
        ids.push_back(id);
    return ids;
}

std::shared_ptr<const SessionSnapshot> SessionManager::snapshot(const std::string& session_id) const
{
    return session(session_id).view();
}

GenerationView SessionManager::get_generation(const std::string& session_id) const
{
    const auto snap = snapshot(session_id);
    GenerationView view;
    view.generation = snap->state.generation;
    view.status = snap->status;
    view.image_ids = population_image_ids(snap->state.population);
    if (snap->status != SessionStatus::finished && snap->mode == SessionMode::collaborative)
        for (const auto& p : snap->roster)
            if (!snap->current_ballots.contains(p))
                view.pending_participants.push_back(p);
    return view;
}

std::vector<std::uint8_t> SessionManager::image_png(const std::string& session_id, const std::string& image_id) const
{
    const auto snap = snapshot(session_id);
    const Individual* found = nullptr;
    for (const auto* group : {&snap->state.population, &snap->state.hall_of_fame})
        for (const auto& ind : *group)
            if (image_id_for(ind) == image_id)
                found = &ind;
    if (!found)
        throw ServiceError(404, "unknown_image", "image '" + image_id + "' is not in session '" + session_id + "'");

    const std::string key = session_id + "/" + image_id;
    {
        std::lock_guard lock(png_mutex_);
        if (auto it = png_cache_.find(key); it != png_cache_.end())
            return *it->second;
    }
    auto png = std::make_shared<const std::vector<std::uint8_t>>(
        to_png_bytes(upsample(generator_->generate(found->genotype), kDisplayUpsample)));
    std::lock_guard lock(png_mutex_);
    if (png_cache_.size() >= 64)
        png_cache_.clear();
    png_cache_[key] = png;
    return *png;
}

SubmitResult SessionManager::submit_ballot(const std::string& session_id, const RatingBallot& ballot)
{
    auto& s = session(session_id);
    std::lock_guard lock(s.write_mutex);
    auto& w = s.working;
    if (w.mode != SessionMode::collaborative)
        throw ServiceError(409, "not_collaborative", "session '" + session_id + "' does not accept ballots");
    if (w.status == SessionStatus::finished)
        throw ServiceError(409, "session_finished", "session '" + session_id + "' is finished");
    if (std::find(w.roster.begin(), w.roster.end(), ballot.participant_id) == w.roster.end())
        throw ServiceError(403, "unknown_participant", "participant '" + ballot.participant_id + "' not in roster");
    if (ballot.generation != w.state.generation)
        throw ServiceError(409, "wrong_generation",
                           "ballot for generation " + std::to_string(ballot.generation) + ", current is " +
                               std::to_string(w.state.generation));
    if (w.current_ballots.contains(ballot.participant_id))
        throw ServiceError(409, "duplicate_ballot",
                           "participant '" + ballot.participant_id + "' already submitted for generation " +
                               std::to_string(ballot.generation));
    const auto ids = population_image_ids(w.state.population);
    try {
        validate_ballot(ballot, w.state.generation, ids);
    } catch (const BallotError& e) {
        throw ServiceError(422, std::string(to_string(e.code())), e.what());
    }

    append_durable(s.log_path(), ballot_to_json(ballot).dump());
    w.current_ballots.emplace(ballot.participant_id, ballot);

    SubmitResult result;
    result.accepted = true;
    if (w.current_ballots.size() == w.roster.size()) {
        advance(w, s.dir, evaluator_, [&] { s.publish(); });
        result.generation_advanced = true;
    } else {
        s.publish();
    }
    result.generation = w.state.generation;
    result.status = w.status;
    return result;
}

ResultsView SessionManager::get_results(const std::string& session_id) const
{
    const auto snap = snapshot(session_id);
    return {snap->status, snap->state.fitness_history, snap->state.hall_of_fame, snap->fitness_records};
}

std::size_t SessionManager::rollback(const std::string& session_id, std::optional<std::uint32_t> generation)
{
    auto& s = session(session_id);
    std::lock_guard lock(s.write_mutex);
    auto& w = s.working;
    if (w.status == SessionStatus::finished)
        throw ServiceError(409, "session_finished", "session '" + session_id + "' is finished");
    if (generation && *generation != w.state.generation)
        throw ServiceError(409, "wrong_generation", "only the current generation's ballots can be rolled back");
    const std::size_t discarded = w.current_ballots.size();
    append_durable(s.log_path(), json{{"type", "rollback"}, {"generation", w.state.generation}}.dump());
    w.current_ballots.clear();
    s.publish();
    return discarded;
}

std::string SessionManager::create_evaluation(Condition condition, const std::vector<std::string>& candidates,
                                              const std::vector<std::string>& comparators, std::uint64_t seed)
{
    auto ev = std::make_unique<Evaluation>();
    Rng rng(seed);
    try {
        ev->trials = build_trials(condition, candidates, comparators, rng);
    } catch (const InvalidArgument& e) {
        throw ServiceError(422, "invalid_trials", e.what());
    }
    ev->id = random_id('e');
    ev->file = data_dir_ / "evaluations" / (ev->id + ".json");
    ev->save();
    const std::string id = ev->id;
    std::unique_lock lock(registry_mutex_);
    evaluations_.emplace(id, std::move(ev));
    return id;
}

std::vector<PairwiseTrial> SessionManager::evaluation_trials(const std::string& evaluation_id) const
{
    auto& ev = evaluation(evaluation_id);
    std::lock_guard lock(ev.mutex);
    return ev.trials;
}

std::size_t SessionManager::submit_responses(const std::string& evaluation_id,
                                             const std::vector<PreferenceResponse>& responses)
{
    auto& ev = evaluation(evaluation_id);
    std::lock_guard lock(ev.mutex);
    std::set<std::string> trial_ids;
    for (const auto& t : ev.trials)
        trial_ids.insert(t.trial_id);
    std::set<std::pair<std::string, std::string>> answered;
    for (const auto& r : ev.responses)
        answered.emplace(r.trial_id, r.respondent_id);
    for (const auto& r : responses) {
        if (!trial_ids.contains(r.trial_id))
            throw ServiceError(422, "unknown_trial", "unknown trial '" + r.trial_id + "'");
        if (r.respondent_id.empty())
            throw ServiceError(422, "invalid_respondent", "respondent_id must be non-empty");
        if (!answered.emplace(r.trial_id, r.respondent_id).second)
            throw ServiceError(409, "duplicate_response",
                               "respondent '" + r.respondent_id + "' already answered trial '" + r.trial_id + "'");
    }
    ev.responses.insert(ev.responses.end(), responses.begin(), responses.end());
    ev.save();
    return responses.size();
}

PreferenceSummary SessionManager::evaluation_summary(const std::string& evaluation_id) const
{
    auto& ev = evaluation(evaluation_id);
    std::lock_guard lock(ev.mutex);
    return preference_proportions(ev.trials, ev.responses);
}

} // namespace collabevo
