#ifndef MINISTONE_H
#define MINISTONE_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MsStatus {
  MS_STATUS_OK = 0,
  MS_STATUS_NULL_ARGUMENT = 1,
  MS_STATUS_INVALID_ARGUMENT = 2,
  MS_STATUS_ILLEGAL_ACTION = 3,
  MS_STATUS_TERMINAL = 4,
  MS_STATUS_POOL_MISMATCH = 5,
  MS_STATUS_IO = 6,
  MS_STATUS_BUFFER_TOO_SMALL = 7,
  MS_STATUS_PANIC = 8,
} MsStatus;

typedef struct MsEngine MsEngine;

typedef struct MsPolicy MsPolicy;

/**
 * A match in progress together with the log that reproduces it.
 */
typedef struct MsState MsState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf`.
 */
enum MsStatus ms_last_error(char *buf, size_t len, size_t *out_len);

/**
 * The built-in engine. Never null.
 */
struct MsEngine *ms_engine_new(void);

void ms_engine_free(struct MsEngine *engine);

/**
 * Size of the action table; legal masks have this many entries.
 */
uint32_t ms_engine_action_count(const struct MsEngine *engine);

uint32_t ms_engine_pool_size(const struct MsEngine *engine);

uint64_t ms_engine_pool_checksum(const struct MsEngine *engine);

enum MsStatus ms_action_label(const struct MsEngine *engine,
                              uint16_t action,
                              char *buf,
                              size_t len,
                              size_t *out_len);

/**
 * Start a match. A non-null `deck0`/`deck1` of `len` card ids skips deck
 * building for that seat.
 */
enum MsStatus ms_match_new(const struct MsEngine *engine,
                           uint8_t hero0,
                           uint8_t hero1,
                           const uint16_t *deck0,
                           size_t len0,
                           const uint16_t *deck1,
                           size_t len1,
                           uint64_t seed,
                           struct MsState **out);

void ms_state_free(struct MsState *state);

enum MsStatus ms_state_clone(const struct MsState *state, struct MsState **out);

/**
 * Seat to move, or -1 once the match is over.
 */
int32_t ms_state_to_move(const struct MsState *state);

int32_t ms_state_outcome(const struct MsState *state);

/**
 * Hero hit points plus armor for `seat`.
 */
int32_t ms_state_health(const struct MsState *state, uint8_t seat);

/**
 * Write one byte per action (1 legal, 0 not) into `out`, which must hold
 * `ms_engine_action_count` bytes.
 */
enum MsStatus ms_legal_mask(const struct MsEngine *engine,
                            const struct MsState *state,
                            uint8_t *out,
                            size_t len);

/**
 * Apply `action` in place. `rewards`, if non-null, receives both seats'
 * rewards. On failure the state is unchanged.
 */
enum MsStatus ms_step(const struct MsEngine *engine,
                      struct MsState *state,
                      uint16_t action,
                      int8_t *rewards);

/**
 * Replay text of every action applied so far.
 */
enum MsStatus ms_state_replay(const struct MsState *state, char *buf, size_t len, size_t *out_len);

/**
 * Re-simulate replay text; `out_outcome` receives the final outcome code.
 */
enum MsStatus ms_replay_verify(const struct MsEngine *engine,
                               const char *text,
                               int32_t *out_outcome);

/**
 * Load a checkpoint; `seed` drives sampled actions.
 */
enum MsStatus ms_policy_load(const struct MsEngine *engine,
                             const char *path,
                             uint64_t seed,
                             struct MsPolicy **out);

void ms_policy_free(struct MsPolicy *policy);

/**
 * Pick an action for the seat to move. `greedy` takes the most probable
 * action instead of sampling.
 */
enum MsStatus ms_policy_act(const struct MsEngine *engine,
                            struct MsPolicy *policy,
                            const struct MsState *state,
                            bool greedy,
                            uint16_t *out_action);

/**
 * Scripted greedy bot move.
 */
enum MsStatus ms_greedy_action(const struct MsEngine *engine,
                               const struct MsState *state,
                               uint16_t *out_action);

/**
 * Uniformly random legal move drawn from `seed`.
 */
enum MsStatus ms_random_action(const struct MsEngine *engine,
                               const struct MsState *state,
                               uint64_t seed,
                               uint16_t *out_action);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MINISTONE_H */
