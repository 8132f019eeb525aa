#ifndef QLOSS_H
#define QLOSS_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
enum QlossStatus {
  QlossStatus_Ok = 0,
  /**
   * A pointer argument was null or a scalar argument was out of range.
   */
  QlossStatus_InvalidArgument = 1,
  /**
   * The truncated basis lost more probability mass than allowed.
   */
  QlossStatus_CutoffTooSmall = 2,
  /**
   * No receiver squeeze attains the required Fisher-information ratio.
   */
  QlossStatus_ExistenceRegion = 3,
  /**
   * Internal numeric failure.
   */
  QlossStatus_Internal = 4,
};
typedef int32_t QlossStatus;

/**
 * Channel scenario handle.
 */
typedef struct QlossChannel QlossChannel;

/**
 * Outcome-distribution handle.
 */
typedef struct QlossPmf QlossPmf;

/**
 * Library version as a static C string.
 */
const char *qloss_version(void);

/**
 * Message describing the most recent failure on this thread.
 */
const char *qloss_last_error_message(void);

/**
 * Create a channel scenario. `theta` in (0, 1], `n_s >= 0`, `n_b > 0`,
 * `gamma` in (-pi, pi].
 */
QlossStatus qloss_channel_new(double theta,
                              double gamma,
                              double n_s,
                              double n_b,
                              QlossChannel **out);

/**
 * Release a channel handle. Null is ignored.
 */
void qloss_channel_free(QlossChannel *channel);

/**
 * Quantum Fisher information about the transmittance at the channel's
 * true parameters.
 */
QlossStatus qloss_qfi(const QlossChannel *channel,
                      uint32_t per_mode_max,
                      double tail_tol,
                      double *out_qfi);

/**
 * Choose the receiver squeeze at a preliminary estimate. Writes the squeeze
 * parameter and the achieved CFI/QFI ratio.
 */
QlossStatus qloss_select_omega(const QlossChannel *channel,
                               double theta_hat,
                               double gamma_hat,
                               uint32_t per_mode_max,
                               double tail_tol,
                               double *out_omega,
                               double *out_cfi_ratio);

/**
 * Build the outcome distribution of the TMS + PNR receiver for the state at
 * `theta` with receiver settings `(omega, gamma_hat)`.
 */
QlossStatus qloss_pmf_new(const QlossChannel *channel,
                          double theta,
                          double omega,
                          double gamma_hat,
                          uint32_t per_mode_max,
                          double tail_tol,
                          QlossPmf **out);

/**
 * Probability of the outcome pair `(k, m)`.
 */
QlossStatus qloss_pmf_prob(const QlossPmf *pmf, uint32_t k, uint32_t m, double *out);

/**
 * Probability mass outside the retained grid.
 */
QlossStatus qloss_pmf_tail_mass(const QlossPmf *pmf, double *out);

/**
 * Release a p.m.f. handle. Null is ignored.
 */
void qloss_pmf_free(QlossPmf *pmf);

/**
 * Run one seeded two-stage trial; writes the refined estimate, the
 * preliminary estimate, and the phase estimate.
 */
QlossStatus qloss_run_trial(const QlossChannel *channel,
                            uint64_t n_total,
                            double schedule_q,
                            uint32_t per_mode_max,
                            double tail_tol,
                            double theta_lo,
                            uint64_t seed,
                            double *out_theta_r,
                            double *out_theta_p,
                            double *out_gamma_hat);

#endif  /* QLOSS_H */
