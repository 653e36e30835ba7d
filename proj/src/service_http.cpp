#include "collabevo/service_http.hpp"

#include "collabevo/errors.hpp"
#include "collabevo/serialization.hpp"

#include <httplib.h>

#include <iostream>

namespace collabevo {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, json body)
{
    body["version"] = kApiVersion;
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message)
{
    send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

// Runs a handler, mapping library exceptions onto HTTP errors.
template <typename Fn>
httplib::Server::Handler guarded(Fn fn)
{
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const ServiceError& e) {
            send_error(res, e.http_status(), e.code(), e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, "bad_request", e.what());
        } catch (const ConfigError& e) {
            send_error(res, 422, "invalid_config", e.what());
        } catch (const InvalidArgument& e) {
            send_error(res, 422, "invalid_argument", e.what());
        } catch (const FormatError& e) {
            send_error(res, 400, "bad_request", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal", e.what());
        }
    };
}

json parse_body(const httplib::Request& req)
{
    json body = json::parse(req.body);
    if (!body.is_object())
        throw ServiceError(400, "bad_request", "request body must be a JSON object");
    if (body.contains("version") && body.at("version") != kApiVersion)
        throw ServiceError(400, "unsupported_version", "unsupported request version");
    return body;
}

std::string image_url(const std::string& session_id, const std::string& image_id)
{
    return "/sessions/" + session_id + "/images/" + image_id + ".png";
}

json record_json(const FitnessRecord& r)
{
    return {{"per_participant", r.per_participant}, {"mean", r.mean}, {"sd", r.sd}, {"range", {r.min, r.max}}};
}

RatingBallot parse_ballot(const json& body)
{
    RatingBallot ballot;
    ballot.participant_id = body.at("participant_id").get<std::string>();
    ballot.generation = body.at("generation").get<std::uint32_t>();
    for (const auto& [image, value] : body.at("ratings").items()) {
        if (!value.is_number_integer())
            throw ServiceError(422, "rating_out_of_range", "rating for image '" + image + "' must be an integer 1..10");
        const auto v = value.get<std::int64_t>();
        if (v < kMinRating || v > kMaxRating)
            throw ServiceError(422, "rating_out_of_range",
                               "rating " + std::to_string(v) + " for image '" + image + "' outside 1..10");
        ballot.ratings.emplace(image, static_cast<int>(v));
    }
    return ballot;
}

} // namespace

void mount_routes(httplib::Server& server, SessionManager& manager)
{
    server.Post("/sessions", guarded([&](const httplib::Request& req, httplib::Response& res) {
        const json body = parse_body(req);
        RunConfig config;
        try {
            config = config_from_json(body.value("config", json::object()));
        } catch (const ConfigError& e) {
            throw ServiceError(422, "invalid_config", std::string("config.") + e.what());
        }
        const auto mode = session_mode_from_string(body.value("mode", std::string("collaborative")));
        const auto roster = body.value("roster", std::vector<std::string>{});
        const auto id = manager.create_session(config, roster, mode);
        const auto view = manager.get_generation(id);
        send_json(res, 201,
                  {{"session_id", id}, {"status", to_string(view.status)}, {"generation", view.generation}});
    }));

    server.Get(R"(/sessions/([^/]+)/generation)", guarded([&](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const auto view = manager.get_generation(id);
        json images = json::array();
        for (const auto& image : view.image_ids)
            images.push_back({{"image_id", image}, {"url", image_url(id, image)}});
        send_json(res, 200,
                  {{"session_id", id},
                   {"generation", view.generation},
                   {"status", to_string(view.status)},
                   {"images", std::move(images)},
                   {"pending_participants", view.pending_participants}});
    }));

    server.Get(R"(/sessions/([^/]+)/images/([^/]+)\.png)",
               guarded([&](const httplib::Request& req, httplib::Response& res) {
                   const auto png = manager.image_png(req.matches[1], req.matches[2]);
                   res.status = 200;
                   res.set_content(reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
               }));

    server.Post(R"(/sessions/([^/]+)/ballots)", guarded([&](const httplib::Request& req, httplib::Response& res) {
        const auto result = manager.submit_ballot(req.matches[1], parse_ballot(parse_body(req)));
        send_json(res, 200,
                  {{"accepted", result.accepted},
                   {"generation_advanced", result.generation_advanced},
                   {"generation", result.generation},
                   {"status", to_string(result.status)}});
    }));

    server.Get(R"(/sessions/([^/]+)/results)", guarded([&](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const auto results = manager.get_results(id);
        json history = json::array();
        for (const auto& r : results.fitness_history)
            history.push_back(to_json(r));
        json hof = json::array();
        for (const auto& ind : results.hall_of_fame)
            hof.push_back({{"image_id", image_id_for(ind)},
                           {"fitness", *ind.fitness},
                           {"origin", to_string(ind.origin)},
                           {"born_generation", ind.born_generation},
                           {"url", image_url(id, image_id_for(ind))}});
        json records = json::object();
        for (const auto& [gen, per_image] : results.fitness_records) {
            json g = json::object();
            for (const auto& [image, rec] : per_image)
                g[image] = record_json(rec);
            records[std::to_string(gen)] = std::move(g);
        }
        send_json(res, 200,
                  {{"session_id", id},
                   {"status", to_string(results.status)},
                   {"fitness_history", std::move(history)},
                   {"hall_of_fame", std::move(hof)},
                   {"fitness_records", std::move(records)}});
    }));

    server.Post(R"(/sessions/([^/]+)/rollback)", guarded([&](const httplib::Request& req, httplib::Response& res) {
        std::optional<std::uint32_t> generation;
        if (!req.body.empty()) {
            const json body = parse_body(req);
            if (body.contains("generation"))
                generation = body.at("generation").get<std::uint32_t>();
        }
        const auto discarded = manager.rollback(req.matches[1], generation);
        send_json(res, 200, {{"discarded_ballots", discarded}});
    }));

    server.Post("/evaluations", guarded([&](const httplib::Request& req, httplib::Response& res) {
        const json body = parse_body(req);
        Condition condition;
        try {
            condition = condition_from_string(body.at("condition").get<std::string>());
        } catch (const InvalidArgument& e) {
            throw ServiceError(422, "invalid_condition", e.what());
        }
        const auto id = manager.create_evaluation(condition, body.at("candidates").get<std::vector<std::string>>(),
                                                  body.at("comparators").get<std::vector<std::string>>(),
                                                  body.value("seed", std::uint64_t{0}));
        json trials = json::array();
        for (const auto& t : manager.evaluation_trials(id))
            trials.push_back(to_json(t));
        send_json(res, 201, {{"evaluation_id", id}, {"trials", std::move(trials)}});
    }));

    server.Get(R"(/evaluations/([^/]+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        json trials = json::array();
        for (const auto& t : manager.evaluation_trials(id))
            trials.push_back(to_json(t));
        send_json(res, 200, {{"evaluation_id", id}, {"trials", std::move(trials)}});
    }));

    server.Post(R"(/evaluations/([^/]+)/responses)",
                guarded([&](const httplib::Request& req, httplib::Response& res) {
                    const json body = parse_body(req);
                    const auto default_respondent = body.value("respondent_id", std::string());
                    std::vector<PreferenceResponse> responses;
                    for (const auto& r : body.at("responses")) {
                        Side choice;
                        try {
                            choice = side_from_string(r.at("choice").get<std::string>());
                        } catch (const InvalidArgument& e) {
                            throw ServiceError(422, "invalid_choice", e.what());
                        }
                        responses.push_back({r.at("trial_id").get<std::string>(),
                                             r.value("respondent_id", default_respondent), choice});
                    }
                    const auto stored = manager.submit_responses(req.matches[1], responses);
                    send_json(res, 200, {{"accepted", stored}});
                }));

    server.Get(R"(/evaluations/([^/]+)/results)", guarded([&](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, summary_to_json(manager.evaluation_summary(req.matches[1])));
    }));
}

bool run_server(const ServiceOptions& options)
{
    const auto generator = make_generator(options.generator);
    const auto scorer = make_scorer(options.scorer);
    SessionManager manager(options.data_dir, *generator, *scorer);
    httplib::Server server;
    mount_routes(server, manager);
    std::cerr << "collabevo: serving on " << options.bind_address << ':' << options.port << " (data "
              << options.data_dir.string() << ", generator " << generator->describe() << ", scorer "
              << scorer->describe() << ")\n";
    return server.listen(options.bind_address, options.port);
}

} // namespace collabevo
