#ifndef DSOTFS_H
#define DSOTFS_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum DsotfsStatus {
  DSOTFS_STATUS_OK = 0,
  DSOTFS_STATUS_NULL_POINTER = 1,
  DSOTFS_STATUS_INVALID_ARGUMENT = 2,
  DSOTFS_STATUS_LENGTH_MISMATCH = 3,
  DSOTFS_STATUS_BUFFER_TOO_SMALL = 4,
  DSOTFS_STATUS_UNSUPPORTED = 5,
  DSOTFS_STATUS_NUMERICAL = 6,
  DSOTFS_STATUS_PANIC = 7,
} DsotfsStatus;

/**
 * Waveform selector for `dsotfs_modulate`.
 */
typedef enum DsotfsWaveform {
  DSOTFS_WAVEFORM_OFDM = 0,
  DSOTFS_WAVEFORM_DFT_S_OFDM = 1,
  DSOTFS_WAVEFORM_OTFS = 2,
  DSOTFS_WAVEFORM_DFT_S_OTFS = 3,
} DsotfsWaveform;

/**
 * Opaque multipath channel bound to a frame.
 */
typedef struct DsotfsChannel DsotfsChannel;

/**
 * Opaque frame description.
 */
typedef struct DsotfsFrame DsotfsFrame;

/**
 * Complex sample with the same layout as `double _Complex`.
 */
typedef struct DsotfsComplex {
  double re;
  double im;
} DsotfsComplex;

/**
 * One estimated target.
 */
typedef struct DsotfsTarget {
  struct DsotfsComplex alpha;
  /**
   * Seconds.
   */
  double tau;
  /**
   * Hertz.
   */
  double nu;
  /**
   * Metres.
   */
  double range;
  /**
   * Metres per second.
   */
  double velocity;
} DsotfsTarget;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *dsotfs_last_error(void);

/**
 * Creates an `m x n` frame with subcarrier spacing `delta_f` (Hz), prefix
 * length `cp_len` (samples) and carrier `f_c` (Hz).
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum DsotfsStatus dsotfs_frame_new(size_t m,
                                   size_t n,
                                   double delta_f,
                                   size_t cp_len,
                                   double f_c,
                                   struct DsotfsFrame **out);

/**
 * Releases a frame. NULL is ignored.
 *
 * # Safety
 * `frame` must come from `dsotfs_frame_new` and not have been freed.
 */
void dsotfs_frame_free(struct DsotfsFrame *frame);

/**
 * Number of samples `m * n` in one frame, or 0 for NULL.
 *
 * # Safety
 * `frame` must be NULL or a live frame handle.
 */
size_t dsotfs_frame_len(const struct DsotfsFrame *frame);

/**
 * Builds a channel of `count` paths with delays `taus` (s), Doppler shifts
 * `nus` (Hz) and gains `gains`. `active` selects two-way geometry.
 *
 * # Safety
 * `frame` must be a live frame handle; the three arrays must hold `count`
 * elements; `out` must be writable.
 */
enum DsotfsStatus dsotfs_channel_new(const struct DsotfsFrame *frame,
                                     const double *taus,
                                     const double *nus,
                                     const struct DsotfsComplex *gains,
                                     size_t count,
                                     bool active,
                                     struct DsotfsChannel **out);

/**
 * Releases a channel. NULL is ignored.
 *
 * # Safety
 * `channel` must come from `dsotfs_channel_new` and not have been freed.
 */
void dsotfs_channel_free(struct DsotfsChannel *channel);

/**
 * Applies the channel to one prefix-free frame of `len` time samples.
 *
 * # Safety
 * `channel` must be live; `input` and `output` must each hold `len`
 * elements and may not overlap.
 */
enum DsotfsStatus dsotfs_channel_apply(const struct DsotfsChannel *channel,
                                       const struct DsotfsComplex *input,
                                       struct DsotfsComplex *output,
                                       size_t len);

/**
 * Modulates `m * n * log2(qam_order)` bits (one bit per byte) into a
 * prefix-free frame of `m * n` time samples. `waveform` is a
 * `DsotfsWaveform` value. `sigma_p2` is the
 * superimposed pilot share; it must be 0 for the OFDM waveforms.
 *
 * # Safety
 * `frame` must be live; `bits` must hold `n_bits` bytes and `samples`
 * must hold `capacity` elements.
 */
enum DsotfsStatus dsotfs_modulate(const struct DsotfsFrame *frame,
                                  uint32_t waveform,
                                  const uint8_t *bits,
                                  size_t n_bits,
                                  size_t qam_order,
                                  double sigma_p2,
                                  struct DsotfsComplex *samples,
                                  size_t capacity);

/**
 * Active-sensing estimate of `targets` paths from a known transmitted
 * frame `tx` and its echo `rx`, both prefix-free with `len = m * n`
 * samples. Results go to `out[0..targets]`. `resolution_divisor` sets the
 * refinement resolution as a fraction of one bin; pass 0 for the default.
 *
 * # Safety
 * `frame` must be live; `tx` and `rx` must hold `len` elements; `out` must
 * hold `targets` elements.
 */
enum DsotfsStatus dsotfs_estimate_active(const struct DsotfsFrame *frame,
                                         const struct DsotfsComplex *tx,
                                         const struct DsotfsComplex *rx,
                                         size_t len,
                                         size_t targets,
                                         double resolution_divisor,
                                         struct DsotfsTarget *out);

/**
 * Pilot share maximising the closed-form SINR. Writes the share and the
 * linear SINR.
 *
 * # Safety
 * `sigma_p2` and `sinr` must be writable.
 */
enum DsotfsStatus dsotfs_optimize_pilot_power(double sigma_h2,
                                              double sigma_w2,
                                              size_t paths,
                                              size_t m,
                                              size_t n,
                                              double *sigma_p2,
                                              double *sinr);

/**
 * Peak-to-average power ratio of `len` samples in dB.
 *
 * # Safety
 * `samples` must hold `len` elements and `out` must be writable.
 */
enum DsotfsStatus dsotfs_papr_db(const struct DsotfsComplex *samples, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSOTFS_H */
