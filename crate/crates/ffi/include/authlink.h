#ifndef AUTHLINK_H
#define AUTHLINK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define AUTHLINK_TAG_LEN 32

// Result of every call.
typedef enum AuthlinkStatus {
  AUTHLINK_STATUS_OK = 0,
  AUTHLINK_STATUS_NULL_POINTER = 1,
  AUTHLINK_STATUS_INVALID_ARGUMENT = 2,
  AUTHLINK_STATUS_PARAMETER = 3,
  AUTHLINK_STATUS_KEY_VALIDATION = 4,
  AUTHLINK_STATUS_FRAME = 5,
  AUTHLINK_STATUS_TIMEOUT = 6,
  AUTHLINK_STATUS_STATE = 7,
  AUTHLINK_STATUS_IO = 8,
  AUTHLINK_STATUS_BUFFER_TOO_SMALL = 9,
  // Authentication failed; not an internal error.
  AUTHLINK_STATUS_REJECTED = 10,
  AUTHLINK_STATUS_PANIC = 11,
  AUTHLINK_STATUS_INTERNAL = 12,
} AuthlinkStatus;

// Which node of a session a call refers to.
typedef enum AuthlinkNode {
  AUTHLINK_NODE_DRONE0 = 0,
  AUTHLINK_NODE_DRONE1 = 1,
} AuthlinkNode;

typedef enum AuthlinkAttackMode {
  AUTHLINK_ATTACK_MODE_TAMPER = 0,
  AUTHLINK_ATTACK_MODE_REPLACE = 1,
  AUTHLINK_ATTACK_MODE_RANDOM = 2,
} AuthlinkAttackMode;

typedef enum AuthlinkTargets {
  AUTHLINK_TARGETS_DRONE0 = 0,
  AUTHLINK_TARGETS_DRONE1 = 1,
  AUTHLINK_TARGETS_BOTH = 2,
  AUTHLINK_TARGETS_NONE = 3,
} AuthlinkTargets;

// Opaque in-process message bus.
typedef struct AuthlinkBus AuthlinkBus;

// Opaque drone0/drone1 pair sharing one bus.
typedef struct AuthlinkSession AuthlinkSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the
// next call into the library from the same thread.
const char *authlink_last_error(void);

// Library version as a static NUL-terminated string.
const char *authlink_version(void);

// HMAC-SHA-256 of `data` under `key`; writes 32 bytes to `out_tag`.
enum AuthlinkStatus authlink_hmac_sha256(const uint8_t *key,
                                         size_t key_len,
                                         const uint8_t *data,
                                         size_t data_len,
                                         uint8_t *out_tag);

// Constant-time check of a 32-byte tag. `Ok` if it matches, `Rejected` otherwise.
enum AuthlinkStatus authlink_hmac_sha256_verify(const uint8_t *key,
                                                size_t key_len,
                                                const uint8_t *data,
                                                size_t data_len,
                                                const uint8_t *tag,
                                                size_t tag_len);

// Session key of `hmac_bits / 8` bytes from a fixed-length encoded shared secret.
enum AuthlinkStatus authlink_derive_session_key(const uint8_t *secret,
                                                size_t secret_len,
                                                uint32_t hmac_bits,
                                                uint8_t *out,
                                                size_t capacity,
                                                size_t *written);

// Sign `payload` under `key` and write the complete wire frame.
enum AuthlinkStatus authlink_frame_sign(const uint8_t *key,
                                        size_t key_len,
                                        const char *sender_id,
                                        uint64_t seq,
                                        const uint8_t *payload,
                                        size_t payload_len,
                                        uint8_t *out,
                                        size_t capacity,
                                        size_t *written);

// Decode and verify a frame. On `Ok` the payload is copied out and its
// sequence number stored in `out_seq`; a bad tag gives `Rejected`.
enum AuthlinkStatus authlink_frame_verify(const uint8_t *key,
                                          size_t key_len,
                                          const uint8_t *frame,
                                          size_t frame_len,
                                          uint8_t *out_payload,
                                          size_t capacity,
                                          size_t *written,
                                          uint64_t *out_seq);

// New bus. `deterministic != 0` queues messages and releases them in an
// order fixed by `seed`; otherwise delivery is immediate.
enum AuthlinkStatus authlink_bus_new(bool deterministic, uint64_t seed, struct AuthlinkBus **out);

void authlink_bus_free(struct AuthlinkBus *bus);

// Create drone0 and drone1 on `bus`. `well_known != 0` uses the fixed
// group of `dh_bits`; otherwise each node generates parameters.
enum AuthlinkStatus authlink_session_new(const struct AuthlinkBus *bus,
                                         uint32_t dh_bits,
                                         uint32_t hmac_bits,
                                         bool well_known,
                                         uint64_t seed,
                                         struct AuthlinkSession **out);

void authlink_session_free(struct AuthlinkSession *session);

// Run the key exchange and confirmation to completion. `Ok` only when
// both nodes hold the same session key.
enum AuthlinkStatus authlink_session_handshake(struct AuthlinkSession *session);

// `*out_established` is set when both nodes reached the established state.
enum AuthlinkStatus authlink_session_established(struct AuthlinkSession *session,
                                                 bool *out_established);

// Copy one node's session key.
enum AuthlinkStatus authlink_session_key(struct AuthlinkSession *session,
                                         enum AuthlinkNode node,
                                         uint8_t *out,
                                         size_t capacity,
                                         size_t *written);

// Sign and publish `payload` from `from` to its peer.
enum AuthlinkStatus authlink_session_send(struct AuthlinkSession *session,
                                          enum AuthlinkNode from,
                                          const uint8_t *payload,
                                          size_t payload_len,
                                          uint64_t *out_seq);

// Wait up to `timeout_ms` for authenticated data at node `at`. Verified
// payloads are copied out; a frame that fails verification gives `Rejected`.
enum AuthlinkStatus authlink_session_receive(struct AuthlinkSession *session,
                                             enum AuthlinkNode at,
                                             uint64_t timeout_ms,
                                             uint8_t *out,
                                             size_t capacity,
                                             size_t *written);

// Run `trials` seeded man-in-the-middle trials over 2048-bit well-known
// groups. `*out_detected` counts trials in which every attacked drone
// logged a detection; with `AUTHLINK_TARGETS_NONE` it counts clean
// sessions instead.
enum AuthlinkStatus authlink_attack_run(enum AuthlinkAttackMode mode,
                                        enum AuthlinkTargets targets,
                                        double tamper_fraction,
                                        uint64_t trials,
                                        uint64_t seed,
                                        uint64_t *out_detected);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AUTHLINK_H */
