#pragma once

#include "collabevo/service.hpp"

namespace httplib {
class Server;
}

namespace collabevo {

inline constexpr int kApiVersion = 1;

/// Registers the session and evaluation endpoints:
///
///     POST /sessions
///     GET  /sessions/{id}/generation
///     GET  /sessions/{id}/images/{image_id}.png
///     POST /sessions/{id}/ballots
///     GET  /sessions/{id}/results
///     POST /sessions/{id}/rollback
///     POST /evaluations
///     GET  /evaluations/{id}
///     POST /evaluations/{id}/responses
///     GET  /evaluations/{id}/results
///
/// Bodies are JSON documents carrying "version"; failures answer
/// {"version": 1, "error": {"code": ..., "message": ...}}.
void mount_routes(httplib::Server& server, SessionManager& manager);

/// Builds the backends from `options`, mounts the routes and blocks serving.
/// Returns false if the socket could not be bound.
bool run_server(const ServiceOptions& options);

} // namespace collabevo
