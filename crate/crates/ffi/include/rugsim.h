#ifndef RUGSIM_H
#define RUGSIM_H

#include <stdint.h>
#include <stddef.h>

typedef enum RugsimStatus {
  RUGSIM_STATUS_OK = 0,
  RUGSIM_STATUS_NULL_POINTER = 1,
  RUGSIM_STATUS_INVALID_UTF8 = 2,
  RUGSIM_STATUS_LOAD = 3,
  RUGSIM_STATUS_ARITHMETIC = 4,
  RUGSIM_STATUS_FINISHED = 5,
  RUGSIM_STATUS_NOT_FINISHED = 6,
  RUGSIM_STATUS_IO = 7,
  RUGSIM_STATUS_PANIC = 8,
} RugsimStatus;

/*
 Opaque simulation handle.
 */
typedef struct RugsimSim RugsimSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or NULL.

 The pointer stays valid until the next rugsim call on the same thread.
 */
const char *rugsim_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *rugsim_version(void);

/*
 Loads a scenario document and builds a simulation at height 0.

 # Safety
 `scenario_json` must be a NUL-terminated string and `out` a writable
 pointer. The handle written to `out` must be released with
 [`rugsim_sim_free`].
 */
enum RugsimStatus rugsim_sim_new(const char *scenario_json, struct RugsimSim **out);

/*
 # Safety
 `sim` must come from [`rugsim_sim_new`] and not be used afterwards. NULL is ignored.
 */
void rugsim_sim_free(struct RugsimSim *sim);

/*
 Advances one height. Returns `Finished` once every chain is done or the
 simulation has been run to completion.

 # Safety
 `sim` must be a live handle.
 */
enum RugsimStatus rugsim_sim_step(struct RugsimSim *sim);

/*
 Current height, or the final height after a run. 0 for NULL.

 # Safety
 `sim` must be a live handle or NULL.
 */
uint64_t rugsim_sim_height(const struct RugsimSim *sim);

/*
 Runs every chain up to height `n_blocks` (0 means each chain's own
 block count) and finalizes the trace. Writes the trace hash to `hash_out` if non-NULL.

 # Safety
 `sim` must be a live handle; `hash_out` must be NULL or writable.
 */
enum RugsimStatus rugsim_sim_run(struct RugsimSim *sim, uint64_t n_blocks, uint64_t *hash_out);

/*
 Writes events.jsonl, telemetry.csv, state.json and hash.txt into `dir`.

 # Safety
 `sim` must be a live handle; `dir` a NUL-terminated path.
 */
enum RugsimStatus rugsim_sim_write_trace(const struct RugsimSim *sim, const char *dir);

/*
 `max(0, ln(p0 / price))`.

 # Safety
 `out` must be writable.
 */
enum RugsimStatus rugsim_anticoin_value(int64_t p0, int64_t price, int64_t *out);

/*
 Target protocol-token supply for a vaulted value.

 # Safety
 `out` must be writable.
 */
enum RugsimStatus rugsim_target_supply(int64_t vaulted_value, int64_t s0, int64_t *out);

/*
 `k · H^λ`.

 # Safety
 `out` must be writable.
 */
enum RugsimStatus rugsim_whale_penalty(int64_t holdings, int64_t k, int64_t lambda, int64_t *out);

/*
 Total penalty for withdrawing `holdings` in `n` equal parts.

 # Safety
 `out` must be writable.
 */
enum RugsimStatus rugsim_cumulative_penalty(int64_t holdings,
                                            uint64_t n,
                                            int64_t gamma,
                                            int64_t delta_gamma,
                                            int64_t *out);

/*
 FNV-1a 64 of a byte buffer, the hash used for traces.

 # Safety
 `data` must point to `len` readable bytes, or be NULL with `len` 0.
 */
uint64_t rugsim_fnv1a64(const uint8_t *data, uintptr_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RUGSIM_H */
