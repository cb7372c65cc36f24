// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>
#include <thread>

#include "auth/signature.hpp"
#include "client/control_client.hpp"
#include "common/error.hpp"
#include "consrv/consrv.h"
#include "daemon/daemon.hpp"
#include "daemon/tcp_server.hpp"
#include "registry/registry.hpp"
#include "relay/frame.hpp"
#include "sim/harness.hpp"

using namespace consrv;

struct cs_client {
    std::unique_ptr<client::ControlClient> impl;
};

struct cs_daemon {
    std::unique_ptr<EventClock> clock;
    std::unique_ptr<sim::Harness> harness;
    std::unique_ptr<daemon::Daemon> daemon;
    std::unique_ptr<daemon::TcpServer> tcp;
    std::thread clock_thread;
    bool running = false;
};

struct cs_registry {
    registry::Registry impl;
};

namespace {

thread_local std::string g_last_error;

cs_status fail(cs_status s, std::string msg) {
    g_last_error = std::move(msg);
    return s;
}

template <typename Fn>
cs_status guarded(Fn&& fn) {
    try {
        g_last_error.clear();
        return fn();
    } catch (const Error& e) {
        return fail(static_cast<cs_status>(e.code()), e.what());
    } catch (const std::exception& e) {
        return fail(CS_ERR_INTERNAL, e.what());
    }
}

char* dup(std::string_view s) {
    auto* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, s.data(), s.size());
    p[s.size()] = '\0';
    return p;
}

TimePoint wall_now() {
    return std::chrono::time_point_cast<Duration>(std::chrono::system_clock::now());
}

} // namespace

extern "C" {

const char* cs_last_error(void) { return g_last_error.c_str(); }

const char* cs_status_word(cs_status status) {
    if (status == CS_OK) return "ok";
    static thread_local std::string word;
    word = std::string(errc_word(static_cast<Errc>(status)));
    return word.c_str();
}

void cs_free(void* p) { std::free(p); }

cs_status cs_keygen(const char* private_key_path, const char* principal, char** registry_line) {
    return guarded([&] {
        if (!private_key_path || !principal) return fail(CS_ERR_INVALID, "key path and principal are required");
        const auto key = auth::KeyPair::generate();
        key.save(private_key_path);
        if (registry_line) *registry_line = dup(key.registry_line(principal));
        return CS_OK;
    });
}

cs_status cs_client_connect(const char* address, const char* principal, const char* private_key_path,
                            cs_client** out) {
    return guarded([&] {
        if (!address || !principal || !private_key_path || !out) return fail(CS_ERR_INVALID, "missing argument");
        const auto key = auth::KeyPair::load(private_key_path);
        auto c = std::make_unique<cs_client>();
        c->impl = client::ControlClient::connect(address, principal, key);
        *out = c.release();
        return CS_OK;
    });
}

void cs_client_close(cs_client* client) { delete client; }

const char* cs_client_server_id(cs_client* client) { return client ? client->impl->server_id().c_str() : ""; }

cs_status cs_client_request(cs_client* client, const char* line, cs_row_fn on_row, void* ctx, char** text) {
    return guarded([&] {
        if (!client || !line) return fail(CS_ERR_INVALID, "missing argument");
        const auto r = client->impl->request(line);
        if (on_row) {
            for (const auto& row : r.rows) {
                std::vector<const char*> f;
                for (const auto& x : row) f.push_back(x.c_str());
                on_row(ctx, 0, static_cast<int>(f.size()), f.data());
            }
            for (const auto& l : r.lines) {
                const char* f = l.c_str();
                on_row(ctx, 1, 1, &f);
            }
        }
        if (!r.ok) return fail(static_cast<cs_status>(r.code), r.text);
        if (text) *text = dup(r.text);
        return CS_OK;
    });
}

cs_status cs_client_send_line(cs_client* client, const char* line) {
    return guarded([&] {
        if (!client || !line) return fail(CS_ERR_INVALID, "missing argument");
        client->impl->send_line(line);
        return CS_OK;
    });
}

cs_status cs_client_send_data(cs_client* client, const void* data, size_t len) {
    return guarded([&] {
        if (!client || (!data && len)) return fail(CS_ERR_INVALID, "missing argument");
        client->impl->send_data(std::span<const std::uint8_t>(static_cast<const std::uint8_t*>(data), len));
        return CS_OK;
    });
}

cs_status cs_client_next(cs_client* client, int timeout_ms, cs_frame_kind* kind, char** data, size_t* len,
                         cs_status* err_status) {
    return guarded([&] {
        if (!client || !kind) return fail(CS_ERR_INVALID, "missing argument");
        auto f = client->impl->next(Duration{std::max(timeout_ms, 0)});
        if (data) *data = nullptr;
        if (len) *len = 0;
        if (!f) {
            *kind = CS_FRAME_NONE;
            return CS_OK;
        }
        std::string payload = f->text;
        switch (f->kind) {
        case client::Frame::Kind::Row:
            *kind = CS_FRAME_ROW;
            break;
        case client::Frame::Kind::Ok:
            *kind = CS_FRAME_OK;
            break;
        case client::Frame::Kind::Err:
            *kind = CS_FRAME_ERR;
            if (err_status) *err_status = static_cast<cs_status>(f->code);
            break;
        case client::Frame::Kind::Data:
            *kind = CS_FRAME_DATA;
            payload.assign(f->data.begin(), f->data.end());
            break;
        case client::Frame::Kind::Line:
            *kind = CS_FRAME_LINE;
            break;
        case client::Frame::Kind::Event:
            *kind = CS_FRAME_EVENT;
            break;
        case client::Frame::Kind::End:
            *kind = CS_FRAME_END;
            break;
        }
        if (data) *data = dup(payload);
        if (len) *len = payload.size();
        return CS_OK;
    });
}

int cs_client_fd(cs_client* client) { return client ? client->impl->fd() : -1; }

cs_status cs_daemon_create(const char* config_path, const char* listen, const char* simulate_topology, uint64_t seed,
                           double sim_speed, cs_daemon** out) {
    return guarded([&] {
        if (!out) return fail(CS_ERR_INVALID, "missing argument");
        if (sim_speed <= 0) return fail(CS_ERR_INVALID, "simulation speed must be positive");
        auto cfg = config_path ? daemon::DaemonConfig::load(config_path) : daemon::DaemonConfig{};
        if (listen) cfg.listen = listen;
        auto d = std::make_unique<cs_daemon>();
        d->clock = std::make_unique<EventClock>(EventClock::Mode::Paced, wall_now(),
                                                simulate_topology ? sim_speed : 1.0);
        if (simulate_topology) {
            const auto topo = sim::Topology::load(simulate_topology);
            sim::HarnessOptions ho;
            ho.server_id = cfg.server.server_id;
            ho.seed = seed;
            d->harness = sim::Harness::spawn(topo, *d->clock, ho);
            registry::Registry reg = cfg.registry_dir ? registry::Registry::load(*cfg.registry_dir) : registry::Registry{};
            if (reg.console_hosts(cfg.server.server_id).empty()) {
                // the topology is the wiring of a simulated farm
                reg = registry::Registry::parse(d->harness->interconnections() + reg.interconnections_text(),
                                                reg.grants_text(), reg.keys_text());
            }
            d->daemon = std::make_unique<daemon::Daemon>(cfg, *d->clock, std::move(reg));
            d->daemon->attach_harness(*d->harness);
        } else {
            d->daemon = std::make_unique<daemon::Daemon>(cfg, *d->clock);
            d->daemon->open_devices();
        }
        d->tcp = std::make_unique<daemon::TcpServer>(*d->daemon, cfg.listen);
        *out = d.release();
        return CS_OK;
    });
}

cs_status cs_daemon_start(cs_daemon* d) {
    return guarded([&] {
        if (!d) return fail(CS_ERR_INVALID, "missing argument");
        if (d->running) return CS_OK;
        d->daemon->start();
        d->clock_thread = std::thread([clock = d->clock.get()] { clock->run(); });
        d->tcp->start();
        d->running = true;
        return CS_OK;
    });
}

int cs_daemon_bound_port(cs_daemon* d) { return d ? d->tcp->port() : -1; }

cs_status cs_daemon_stop(cs_daemon* d) {
    return guarded([&] {
        if (!d) return fail(CS_ERR_INVALID, "missing argument");
        if (!d->running) return CS_OK;
        d->tcp->stop();
        d->clock->stop();
        if (d->clock_thread.joinable()) d->clock_thread.join();
        d->daemon->stop();
        d->running = false;
        return CS_OK;
    });
}

void cs_daemon_destroy(cs_daemon* d) {
    if (!d) return;
    cs_daemon_stop(d);
    d->tcp.reset();
    d->daemon.reset();
    d->harness.reset();
    delete d;
}

cs_status cs_relay_encode(int box, int relay, int command, int tenths, uint8_t out[6]) {
    return guarded([&] {
        if (!out) return fail(CS_ERR_INVALID, "missing output buffer");
        const auto cmd = relay::command_from_byte(static_cast<std::uint8_t>(command));
        if (!cmd || command < 0 || command > 255) return fail(CS_ERR_INVALID, "unknown relay command");
        if (tenths < 0 || tenths > 255) return fail(CS_ERR_INVALID, "duration out of range");
        const auto frame = relay::RelayFrame::make(relay::RelayAddress::make(box, relay), *cmd,
                                                   static_cast<std::uint8_t>(tenths));
        const auto bytes = relay::encode(frame);
        std::memcpy(out, bytes.data(), 6);
        return CS_OK;
    });
}

cs_status cs_relay_decode(const uint8_t* frame, size_t len, int* box, int* relay, int* command, int* tenths) {
    return guarded([&] {
        if (!frame) return fail(CS_ERR_INVALID, "missing frame");
        const auto f = relay::decode(std::span<const std::uint8_t>(frame, len));
        if (box) *box = f.address.box;
        if (relay) *relay = f.address.relay;
        if (command) *command = static_cast<int>(f.command);
        if (tenths) *tenths = f.duration_tenths;
        return CS_OK;
    });
}

cs_status cs_registry_load(const char* dir, cs_registry** out) {
    return guarded([&] {
        if (!dir || !out) return fail(CS_ERR_INVALID, "missing argument");
        auto r = std::make_unique<cs_registry>();
        r->impl = registry::Registry::load(dir);
        *out = r.release();
        return CS_OK;
    });
}

void cs_registry_free(cs_registry* reg) { delete reg; }

cs_status cs_registry_lookup_console(cs_registry* reg, const char* host, char** server_id, int* port) {
    return guarded([&] {
        if (!reg || !host) return fail(CS_ERR_INVALID, "missing argument");
        const auto c = reg->impl.lookup_console(host);
        if (server_id) *server_id = dup(c.server_id);
        if (port) *port = c.port;
        return CS_OK;
    });
}

cs_status cs_registry_bundle(cs_registry* reg, const char* server_id, const char* out_dir) {
    return guarded([&] {
        if (!reg || !server_id || !out_dir) return fail(CS_ERR_INVALID, "missing argument");
        if (!reg->impl.knows_server(server_id)) throw UnknownServer(server_id);
        reg->impl.bundle_for_server(server_id).write_to(out_dir);
        return CS_OK;
    });
}

} // extern "C"
