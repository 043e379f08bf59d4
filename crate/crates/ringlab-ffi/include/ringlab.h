#ifndef RINGLAB_H
#define RINGLAB_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for all fallible entry points.
 */
typedef enum RlStatus {
  RL_STATUS_OK = 0,
  RL_STATUS_NULL_POINTER = 1,
  RL_STATUS_INVALID_UTF8 = 2,
  /**
   * The chain file could not be read or parsed.
   */
  RL_STATUS_LOAD_FAILED = 3,
  /**
   * Two inputs are forced to spend the same output.
   */
  RL_STATUS_CONFLICTING_CHAIN = 4,
  RL_STATUS_INVALID_ARGUMENT = 5,
  RL_STATUS_INTERNAL_ERROR = 6,
} RlStatus;

/**
 * An opaque, immutable chain handle.
 */
typedef struct RlChain RlChain;

/**
 * Summary of one deduction run.
 */
typedef struct RlDeductionSummary {
  uint64_t total_inputs;
  uint64_t deduced;
  /**
   * Inputs with at least one ruled-out reference but no verdict.
   */
  uint64_t partial;
  uint64_t components_skipped;
} RlDeductionSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ringlab_version(void);

/**
 * Short static description of a status code.
 */
const char *ringlab_status_message(enum RlStatus status);

/**
 * Load a chain from a JSON Lines file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 * On success `*out` owns the chain; release it with [`ringlab_chain_free`].
 */
enum RlStatus ringlab_chain_load(const char *path, struct RlChain **out);

/**
 * Release a chain handle. Passing NULL is a no-op.
 *
 * # Safety
 * `chain` must be NULL or a pointer obtained from [`ringlab_chain_load`],
 * and must not be used afterwards.
 */
void ringlab_chain_free(struct RlChain *chain);

/**
 * Number of blocks in the chain.
 *
 * # Safety
 * `chain` and `out` must be valid pointers.
 */
enum RlStatus ringlab_chain_num_blocks(const struct RlChain *chain, uint64_t *out);

/**
 * Number of ring inputs in the chain.
 *
 * # Safety
 * `chain` and `out` must be valid pointers.
 */
enum RlStatus ringlab_chain_num_inputs(const struct RlChain *chain, uint64_t *out);

/**
 * Run the iterative fixpoint attack and write a summary.
 *
 * # Safety
 * `chain` and `out` must be valid pointers.
 */
enum RlStatus ringlab_fixpoint_deduce(const struct RlChain *chain, struct RlDeductionSummary *out);

/**
 * Run the complete closure attack and write a summary.
 *
 * # Safety
 * `chain` and `out` must be valid pointers.
 */
enum RlStatus ringlab_closure_deduce(const struct RlChain *chain,
                                     uint64_t component_size_limit,
                                     struct RlDeductionSummary *out);

/**
 * Guessing entropy of a probability vector (sum must be 1 within 1e-6).
 *
 * # Safety
 * `probs` must point to `len` readable f64 values; `out` must be valid.
 */
enum RlStatus ringlab_guessing_entropy(const double *probs, uintptr_t len, double *out);

/**
 * Effective untraceability (1 + 2·Ge) of a probability vector.
 *
 * # Safety
 * `probs` must point to `len` readable f64 values; `out` must be valid.
 */
enum RlStatus ringlab_effective_untraceability(const double *probs, uintptr_t len, double *out);

/**
 * Worst-case guessing entropy of an (m+1)-ring at divergence epsilon.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RlStatus ringlab_ge_min(uint64_t m, double epsilon, double *out);

/**
 * Worst-case guessing entropy of a binned ring.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RlStatus ringlab_bge_min(uint64_t bin_size, uint64_t num_bins, double epsilon, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RINGLAB_H */
