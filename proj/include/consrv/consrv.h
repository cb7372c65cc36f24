/* SPDX-License-Identifier: Apache-2.0 */
#ifndef CONSRV_CONSRV_H
#define CONSRV_CONSRV_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define CS_API __attribute__((visibility("default")))
#else
#define CS_API
#endif

/* Status codes. Values are stable and double as consolectl exit codes. */
typedef enum cs_status {
    CS_OK = 0,
    CS_ERR_INTERNAL = 1,
    CS_ERR_INVALID = 2,
    CS_ERR_DENIED = 3,
    CS_ERR_NOT_FOUND = 4,
    CS_ERR_BUSY = 5,
    CS_ERR_TRANSPORT = 6,
    CS_ERR_RATE_LIMITED = 7,
    CS_ERR_CONFLICT = 8
} cs_status;

/* Message for the last failing call on this thread; never NULL. */
CS_API const char* cs_last_error(void);
/* Short word for a status, e.g. "denied". */
CS_API const char* cs_status_word(cs_status status);
/* Frees strings returned through char** out parameters. */
CS_API void cs_free(void* p);

/* Writes a new private key file (mode 0600). If registry_line is not NULL it
 * receives the matching "key <principal> <key-id> <base64>" line. */
CS_API cs_status cs_keygen(const char* private_key_path, const char* principal, char** registry_line);

/* ---- control client ---------------------------------------------------- */

typedef struct cs_client cs_client;

CS_API cs_status cs_client_connect(const char* address, const char* principal, const char* private_key_path,
                                   cs_client** out);
CS_API void cs_client_close(cs_client* client);
/* Server id announced in the handshake; owned by the client. */
CS_API const char* cs_client_server_id(cs_client* client);

/* Called once per "R" row and once per "L" log line (with nfields == 1 and
 * is_log set). */
typedef void (*cs_row_fn)(void* ctx, int is_log, int nfields, const char* const* fields);

/* Runs one request line. On success, *text (if non-NULL) receives the OK
 * text. On a daemon error the status is the mapped code and cs_last_error()
 * holds the daemon's message. Rows are delivered in both cases. */
CS_API cs_status cs_client_request(cs_client* client, const char* line, cs_row_fn on_row, void* ctx, char** text);

typedef enum cs_frame_kind {
    CS_FRAME_NONE = 0, /* timeout */
    CS_FRAME_ROW,
    CS_FRAME_OK,
    CS_FRAME_ERR,
    CS_FRAME_DATA,
    CS_FRAME_LINE,
    CS_FRAME_EVENT,
    CS_FRAME_END
} cs_frame_kind;

/* Streaming primitives for ATTACH, LOG ... FOLLOW and SUBSCRIBE. */
CS_API cs_status cs_client_send_line(cs_client* client, const char* line);
CS_API cs_status cs_client_send_data(cs_client* client, const void* data, size_t len);
/* Waits up to timeout_ms for the next frame. *data receives the payload
 * (bytes for DATA, the text otherwise; NUL-terminated, free with cs_free).
 * For CS_FRAME_ERR, *err_status receives the mapped status. */
CS_API cs_status cs_client_next(cs_client* client, int timeout_ms, cs_frame_kind* kind, char** data, size_t* len,
                                cs_status* err_status);
/* Socket descriptor, for poll() alongside a terminal. */
CS_API int cs_client_fd(cs_client* client);

/* ---- daemon ------------------------------------------------------------ */

typedef struct cs_daemon cs_daemon;

/* config_path: server config file (may be NULL for defaults).
 * simulate_topology: if non-NULL, runs a simulated farm from this topology
 * file instead of opening serial devices; sim_speed scales simulated time
 * against the wall clock. listen overrides the config's listen address when
 * non-NULL ("127.0.0.1:0" picks a free port). */
CS_API cs_status cs_daemon_create(const char* config_path, const char* listen, const char* simulate_topology,
                                  uint64_t seed, double sim_speed, cs_daemon** out);
CS_API cs_status cs_daemon_start(cs_daemon* daemon);
CS_API int cs_daemon_bound_port(cs_daemon* daemon);
CS_API cs_status cs_daemon_stop(cs_daemon* daemon);
CS_API void cs_daemon_destroy(cs_daemon* daemon);

/* ---- relay frame codec ------------------------------------------------- */

/* command: 'P' pulse, 'N' on, 'F' off. out must hold 6 bytes. */
CS_API cs_status cs_relay_encode(int box, int relay, int command, int tenths, uint8_t out[6]);
CS_API cs_status cs_relay_decode(const uint8_t* frame, size_t len, int* box, int* relay, int* command, int* tenths);

/* ---- registry ---------------------------------------------------------- */

typedef struct cs_registry cs_registry;

CS_API cs_status cs_registry_load(const char* dir, cs_registry** out);
CS_API void cs_registry_free(cs_registry* reg);
CS_API cs_status cs_registry_lookup_console(cs_registry* reg, const char* host, char** server_id, int* port);
/* Writes the per-server bundle (three files) into out_dir. */
CS_API cs_status cs_registry_bundle(cs_registry* reg, const char* server_id, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* CONSRV_CONSRV_H */
