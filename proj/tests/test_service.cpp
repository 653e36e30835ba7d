#include "collabevo/errors.hpp"
#include "collabevo/serialization.hpp"
#include "collabevo/service.hpp"
#include "collabevo/service_http.hpp"

#include <doctest.h>
#include <httplib.h>

#include <filesystem>
#include <map>
#include <thread>

using namespace collabevo;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const ProceduralGenerator kGenerator;
const SyntheticScorer kScorer;

struct TempDir
{
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("collabevo-" + name))
    {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

RunConfig small_config(std::uint64_t seed = 3)
{
    RunConfig c;
    c.population_size = 4;
    c.generations = 2;
    c.local_search_generations = 3;
    c.hall_of_fame_size = 3;
    c.participants = 2;
    c.seed = seed;
    return c;
}

const std::vector<std::string> kRoster{"ann", "bob"};

RatingBallot make_ballot(const std::string& who, const GenerationView& view, int base)
{
    RatingBallot b{who, view.generation, {}};
    for (std::size_t i = 0; i < view.image_ids.size(); ++i)
        b.ratings[view.image_ids[i]] = 1 + static_cast<int>((base + i) % 10);
    return b;
}

int expect_service_error(const std::function<void()>& fn, const std::string& code)
{
    try {
        fn();
    } catch (const ServiceError& e) {
        CHECK(e.code() == code);
        return e.http_status();
    }
    FAIL("expected ServiceError " << code);
    return 0;
}

// Rates every generation with deterministic ballots until the session finishes.
void drive(SessionManager& m, const std::string& id)
{
    for (int guard = 0; guard < 100; ++guard) {
        const auto view = m.get_generation(id);
        if (view.status == SessionStatus::finished)
            return;
        for (std::size_t p = 0; p < kRoster.size(); ++p)
            m.submit_ballot(id, make_ballot(kRoster[p], view, static_cast<int>(view.generation + 3 * p)));
    }
    FAIL("session did not finish");
}

} // namespace

TEST_CASE("collaborative session fitness equals ballot means")
{
    TempDir dir("svc-loop");
    SessionManager m(dir.path, kGenerator, kScorer);
    const auto id = m.create_session(small_config(), kRoster, SessionMode::collaborative);

    auto view = m.get_generation(id);
    CHECK(view.generation == 0);
    CHECK(view.status == SessionStatus::awaiting_ratings);
    CHECK(view.image_ids.size() == 4);
    CHECK(view.pending_participants == kRoster);

    const auto a = make_ballot("ann", view, 0);
    const auto b = make_ballot("bob", view, 5);
    auto r = m.submit_ballot(id, a);
    CHECK(r.accepted);
    CHECK_FALSE(r.generation_advanced);
    CHECK(m.get_generation(id).pending_participants == std::vector<std::string>{"bob"});
    r = m.submit_ballot(id, b);
    CHECK(r.generation_advanced);
    CHECK(r.generation == 1);

    const auto results = m.get_results(id);
    REQUIRE(results.fitness_history.size() == 1);
    const auto& rec = results.fitness_history[0];
    for (std::size_t i = 0; i < view.image_ids.size(); ++i) {
        const auto& image = view.image_ids[i];
        const double expected = (a.ratings.at(image) + b.ratings.at(image)) / 2.0;
        CHECK(rec.individuals[i].fitness == expected);
        CHECK(results.fitness_records.at(0).at(image).mean == expected);
    }

    drive(m, id);
    const auto done = m.get_results(id);
    CHECK(done.status == SessionStatus::finished);
    CHECK(done.fitness_history.size() == 3);
    CHECK(done.hall_of_fame.size() == 3);
    CHECK(fs::exists(dir.path / "sessions" / id / "final.json"));
    CHECK(m.get_generation(id).pending_participants.empty());
}

TEST_CASE("ballot rejections")
{
    TempDir dir("svc-errors");
    SessionManager m(dir.path, kGenerator, kScorer);
    const auto id = m.create_session(small_config(), kRoster, SessionMode::collaborative);
    const auto view = m.get_generation(id);

    CHECK(expect_service_error([&] { m.submit_ballot(id, make_ballot("eve", view, 0)); }, "unknown_participant") ==
          403);
    auto stale = make_ballot("ann", view, 0);
    stale.generation = 1;
    CHECK(expect_service_error([&] { m.submit_ballot(id, stale); }, "wrong_generation") == 409);
    auto bad = make_ballot("ann", view, 0);
    bad.ratings.begin()->second = 11;
    CHECK(expect_service_error([&] { m.submit_ballot(id, bad); }, "rating_out_of_range") == 422);
    auto partial = make_ballot("ann", view, 0);
    partial.ratings.erase(partial.ratings.begin());
    CHECK(expect_service_error([&] { m.submit_ballot(id, partial); }, "incomplete_ratings") == 422);

    m.submit_ballot(id, make_ballot("ann", view, 0));
    CHECK(expect_service_error([&] { m.submit_ballot(id, make_ballot("ann", view, 1)); }, "duplicate_ballot") == 409);
    CHECK(m.get_generation(id).generation == 0);

    CHECK(expect_service_error([&] { m.get_generation("nope"); }, "not_found") == 404);
    CHECK(expect_service_error([&] { m.image_png(id, "999999"); }, "unknown_image") == 404);

    expect_service_error([&] { m.create_session(small_config(), {"solo"}, SessionMode::collaborative); },
                         "invalid_roster");
    expect_service_error([&] { m.create_session(small_config(), {"a", "a"}, SessionMode::collaborative); },
                         "invalid_roster");
    auto broken = small_config();
    broken.population_size = 0;
    expect_service_error([&] { m.create_session(broken, kRoster, SessionMode::collaborative); }, "invalid_config");
}

TEST_CASE("rollback discards the current generation's ballots")
{
    TempDir dir("svc-rollback");
    SessionManager m(dir.path, kGenerator, kScorer);
    const auto id = m.create_session(small_config(), kRoster, SessionMode::collaborative);
    const auto view = m.get_generation(id);
    m.submit_ballot(id, make_ballot("ann", view, 0));
    CHECK(m.rollback(id, std::nullopt) == 1);
    CHECK(m.get_generation(id).pending_participants == kRoster);
    m.submit_ballot(id, make_ballot("ann", view, 2));
    CHECK(m.rollback(id, 0u) == 1);
    expect_service_error([&] { m.rollback(id, 5u); }, "wrong_generation");

    // the rollback survives a restart
    SessionManager reloaded(dir.path, kGenerator, kScorer);
    CHECK(reloaded.get_generation(id).pending_participants == kRoster);
}

TEST_CASE("restart mid-generation loses no ballots and reproduces the next population")
{
    TempDir ref_dir("svc-ref"), crash_dir("svc-crash");
    std::string ref_id, crash_id;
    RunState reference;
    {
        SessionManager m(ref_dir.path, kGenerator, kScorer);
        ref_id = m.create_session(small_config(9), kRoster, SessionMode::collaborative);
        const auto view = m.get_generation(ref_id);
        m.submit_ballot(ref_id, make_ballot("ann", view, 0));
        m.submit_ballot(ref_id, make_ballot("bob", view, 4));
        reference = m.snapshot(ref_id)->state;
    }
    {
        SessionManager m(crash_dir.path, kGenerator, kScorer);
        crash_id = m.create_session(small_config(9), kRoster, SessionMode::collaborative);
        m.submit_ballot(crash_id, make_ballot("ann", m.get_generation(crash_id), 0));
    }
    SessionManager resumed(crash_dir.path, kGenerator, kScorer);
    const auto view = resumed.get_generation(crash_id);
    CHECK(view.pending_participants == std::vector<std::string>{"bob"});
    expect_service_error([&] { resumed.submit_ballot(crash_id, make_ballot("ann", view, 0)); }, "duplicate_ballot");
    resumed.submit_ballot(crash_id, make_ballot("bob", view, 4));
    const auto state = resumed.snapshot(crash_id)->state;
    CHECK(state.generation == 1);
    CHECK(serialize(state) == serialize(reference));
}

TEST_CASE("a step interrupted after the last ballot completes on load")
{
    TempDir dir("svc-interrupted");
    std::string id;
    std::string expected;
    {
        SessionManager m(dir.path, kGenerator, kScorer);
        id = m.create_session(small_config(4), kRoster, SessionMode::collaborative);
        const auto view = m.get_generation(id);
        m.submit_ballot(id, make_ballot("ann", view, 0));
        m.submit_ballot(id, make_ballot("bob", view, 1));
        expected = serialize(m.snapshot(id)->state);
    }
    // as if the process died before the next generation was written
    fs::remove(dir.path / "sessions" / id / "state-0001.json");
    SessionManager m(dir.path, kGenerator, kScorer);
    CHECK(m.get_generation(id).generation == 1);
    CHECK(serialize(m.snapshot(id)->state) == expected);
    CHECK(fs::exists(dir.path / "sessions" / id / "state-0001.json"));
}

TEST_CASE("automatic sessions finish immediately and refuse ballots")
{
    TempDir dir("svc-auto");
    SessionManager m(dir.path, kGenerator, kScorer);
    const auto id = m.create_session(small_config(), {}, SessionMode::automatic);
    const auto view = m.get_generation(id);
    CHECK(view.status == SessionStatus::finished);
    CHECK(m.get_results(id).fitness_history.size() == 3);
    expect_service_error([&] { m.submit_ballot(id, RatingBallot{"x", view.generation, {}}); }, "not_collaborative");
}

TEST_CASE("images are served at display resolution")
{
    TempDir dir("svc-png");
    SessionManager m(dir.path, kGenerator, kScorer);
    const auto id = m.create_session(small_config(), kRoster, SessionMode::collaborative);
    const auto view = m.get_generation(id);
    const auto png = m.image_png(id, view.image_ids[0]);
    const auto decoded = decode_png(png);
    CHECK(decoded.width == 2048);
    CHECK(decoded.height == 1152);
    const auto genotype = m.snapshot(id)->state.population[0].genotype;
    CHECK(decoded == quantize(upsample(kGenerator.generate(genotype), kDisplayUpsample)));
}

TEST_CASE("pairwise evaluations")
{
    TempDir dir("svc-eval");
    std::string id;
    {
        SessionManager m(dir.path, kGenerator, kScorer);
        const std::vector<std::string> cands{"c1", "c2", "c3"}, comps{"r1", "r2", "r3"};
        id = m.create_evaluation(Condition::collaborative_vs_random, cands, comps, 11);
        const auto trials = m.evaluation_trials(id);
        CHECK(trials.size() == 3);
        std::vector<PreferenceResponse> responses;
        for (const auto& t : trials)
            responses.push_back({t.trial_id, "r", t.candidate_side});
        CHECK(m.submit_responses(id, responses) == 3);
        expect_service_error([&] { m.submit_responses(id, {responses[0]}); }, "duplicate_response");
        expect_service_error([&] { m.submit_responses(id, {{"ghost", "r", Side::left}}); }, "unknown_trial");
        expect_service_error([&] { m.submit_responses(id, {{trials[0].trial_id, "", Side::left}}); },
                             "invalid_respondent");
        // a rejected batch stores nothing
        expect_service_error(
            [&] {
                m.submit_responses(id, {{trials[0].trial_id, "q", Side::left}, {"ghost", "q", Side::left}});
            },
            "unknown_trial");
        expect_service_error([&] { m.create_evaluation(Condition::automatic_vs_random, cands, {"x"}, 1); },
                             "invalid_trials");
    }
    SessionManager reloaded(dir.path, kGenerator, kScorer);
    const auto s = reloaded.evaluation_summary(id);
    CHECK(s.total == 3);
    CHECK(s.successes == 3);
    CHECK(s.mean == 1.0);
}

TEST_CASE("service options from file and environment")
{
    TempDir dir("svc-options");
    write_file_atomic(dir.path / "service.json", R"({"port": 9001, "data_dir": "/srv/x", "scorer": "synthetic"})");
    std::map<std::string, std::string> env{{"COLLABEVO_BIND", "0.0.0.0"}, {"COLLABEVO_DATA_DIR", "/srv/y"}};
    auto getenv = [&](const char* name) -> std::optional<std::string> {
        auto it = env.find(name);
        if (it == env.end())
            return std::nullopt;
        return it->second;
    };
    auto o = load_service_options(dir.path / "service.json", getenv);
    CHECK(o.port == 9001);
    CHECK(o.bind_address == "0.0.0.0");
    CHECK(o.data_dir == fs::path("/srv/y"));
    CHECK(o.generator.kind == GeneratorBackend::Kind::procedural);

    env["COLLABEVO_PORT"] = "70000";
    CHECK_THROWS_AS(load_service_options(std::nullopt, getenv), ConfigError);
    env["COLLABEVO_PORT"] = "abc";
    CHECK_THROWS_AS(load_service_options(std::nullopt, getenv), ConfigError);
    env.erase("COLLABEVO_PORT");
    env["COLLABEVO_SCORER"] = "oracle";
    CHECK_THROWS_AS(load_service_options(std::nullopt, getenv), ConfigError);
}

TEST_CASE("http endpoints")
{
    TempDir dir("svc-http");
    SessionManager manager(dir.path, kGenerator, kScorer);
    httplib::Server server;
    mount_routes(server, manager);
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    auto post = [&](const std::string& path, const json& body) {
        auto res = client.Post(path, body.dump(), "application/json");
        REQUIRE(res);
        return res;
    };

    auto created = post("/sessions", {{"mode", "collaborative"}, {"roster", kRoster}, {"config", to_json(small_config())}});
    CHECK(created->status == 201);
    const auto created_doc = json::parse(created->body);
    CHECK(created_doc.at("version") == kApiVersion);
    const std::string sid = created_doc.at("session_id");

    auto gen = client.Get("/sessions/" + sid + "/generation");
    REQUIRE(gen);
    CHECK(gen->status == 200);
    const auto gen_doc = json::parse(gen->body);
    CHECK(gen_doc.at("images").size() == 4);
    CHECK(gen_doc.at("status") == "awaiting_ratings");

    const std::string url = gen_doc.at("images")[0].at("url");
    auto img = client.Get(url);
    REQUIRE(img);
    CHECK(img->status == 200);
    CHECK(img->get_header_value("Content-Type") == "image/png");

    json ratings = json::object();
    for (const auto& image : gen_doc.at("images"))
        ratings[image.at("image_id").get<std::string>()] = 6;
    auto ok = post("/sessions/" + sid + "/ballots", {{"participant_id", "ann"}, {"generation", 0}, {"ratings", ratings}});
    CHECK(ok->status == 200);
    CHECK(json::parse(ok->body).at("accepted") == true);
    auto dup = post("/sessions/" + sid + "/ballots", {{"participant_id", "ann"}, {"generation", 0}, {"ratings", ratings}});
    CHECK(dup->status == 409);
    CHECK(json::parse(dup->body).at("error").at("code") == "duplicate_ballot");

    json fractional = ratings;
    fractional.begin().value() = 6.5;
    auto frac = post("/sessions/" + sid + "/ballots",
                     {{"participant_id", "bob"}, {"generation", 0}, {"ratings", fractional}});
    CHECK(frac->status == 422);
    CHECK(json::parse(frac->body).at("error").at("code") == "rating_out_of_range");

    auto malformed = client.Post("/sessions/" + sid + "/ballots", "{oops", "application/json");
    REQUIRE(malformed);
    CHECK(malformed->status == 400);

    auto adv = post("/sessions/" + sid + "/ballots", {{"participant_id", "bob"}, {"generation", 0}, {"ratings", ratings}});
    CHECK(json::parse(adv->body).at("generation_advanced") == true);

    auto results = client.Get("/sessions/" + sid + "/results");
    REQUIRE(results);
    const auto res_doc = json::parse(results->body);
    CHECK(res_doc.at("fitness_history").size() == 1);
    CHECK(res_doc.at("fitness_records").at("0").begin()->at("mean") == 6.0);

    auto rb = post("/sessions/" + sid + "/rollback", json::object());
    CHECK(rb->status == 200);
    CHECK(json::parse(rb->body).at("discarded_ballots") == 0);

    auto missing = client.Get("/sessions/nope/generation");
    REQUIRE(missing);
    CHECK(missing->status == 404);

    auto ev = post("/evaluations", {{"condition", "automatic_vs_random"},
                                    {"candidates", {"a", "b"}},
                                    {"comparators", {"x", "y"}},
                                    {"seed", 1}});
    CHECK(ev->status == 201);
    const auto ev_doc = json::parse(ev->body);
    const std::string eid = ev_doc.at("evaluation_id");
    json responses = json::array();
    for (const auto& t : ev_doc.at("trials"))
        responses.push_back({{"trial_id", t.at("trial_id")}, {"choice", t.at("candidate_side")}});
    auto sent = post("/evaluations/" + eid + "/responses", {{"respondent_id", "r1"}, {"responses", responses}});
    CHECK(sent->status == 200);
    auto summary = client.Get("/evaluations/" + eid + "/results");
    REQUIRE(summary);
    CHECK(json::parse(summary->body).at("successes") == 2);
    auto listed = client.Get("/evaluations/" + eid);
    REQUIRE(listed);
    CHECK(json::parse(listed->body).at("trials").size() == 2);
    auto bad_condition = post("/evaluations", {{"condition", "x"}, {"candidates", {"a"}}, {"comparators", {"b"}}});
    CHECK(bad_condition->status == 422);

    server.stop();
    worker.join();
}
