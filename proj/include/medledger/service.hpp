#pragma once

// HTTP + JSON front end for a LedgerNode.
//
// Authentication: POST /auth/challenge {address} returns a nonce; the
// client signs "medledger login <address> <nonce>" and posts it to
// /auth/login, which returns a bearer token. Private keys never reach
// the server: transactions arrive already signed.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "medledger/node.hpp"

namespace medledger {

struct ServiceOptions {
    std::uint64_t session_ttl_ms = 30 * 60 * 1000;
    std::uint64_t challenge_ttl_ms = 120 * 1000;
    Clock clock = system_clock_ms;
};

// Which operation kind guards each session-protected endpoint.
struct EndpointRule {
    std::string method;
    std::string path;  // {addr} and {hash} mark path parameters
    std::optional<OpKind> op;
    bool needs_session = true;
};
const std::vector<EndpointRule>& endpoint_rules();

std::string login_message(const Address& address, std::string_view nonce_hex);

class ApiService {
public:
    ApiService(LedgerNode& node, ServiceOptions options = {});
    ~ApiService();
    ApiService(const ApiService&) = delete;
    ApiService& operator=(const ApiService&) = delete;

    // port 0 picks a free port. Returns the bound port or -1.
    int bind(const std::string& host, int port);
    // Blocks until stop().
    bool serve();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace medledger
