#ifndef DATL_H
#define DATL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DatlConditioningMode {
  DATL_CONDITIONING_MODE_ONEHOT_TRAIN = 0,
  DATL_CONDITIONING_MODE_ZEROS = 1,
  DATL_CONDITIONING_MODE_UNIFORM = 2,
  DATL_CONDITIONING_MODE_NUISANCE_POSTERIOR = 3,
} DatlConditioningMode;

typedef enum DatlStatus {
  DATL_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8 or an out-of-range argument.
   */
  DATL_STATUS_INVALID_ARGUMENT = 1,
  DATL_STATUS_VALIDATION = 2,
  DATL_STATUS_PARSE = 3,
  DATL_STATUS_IO = 4,
  DATL_STATUS_NON_FINITE = 5,
  DATL_STATUS_STATE = 6,
  DATL_STATUS_PANIC = 7,
} DatlStatus;

typedef struct DatlDataset DatlDataset;

typedef struct DatlModel DatlModel;

typedef struct DatlSweepRow DatlSweepRow;

/**
 * Synthetic generator settings.
 */
typedef struct DatlSynthConfig {
  uintptr_t num_subjects;
  uintptr_t num_classes;
  uintptr_t channels;
  uintptr_t samples;
  double task_effect;
  double subject_effect;
  double noise;
  uintptr_t trials_per_pair;
  uint64_t seed;
} DatlSynthConfig;

/**
 * Training and evaluation settings. `window == 0` disables windowing.
 */
typedef struct DatlTrainConfig {
  double lambda_a;
  double lambda_n;
  double r_n;
  double learning_rate;
  uintptr_t batch_size;
  uintptr_t epochs;
  uintptr_t early_stop_patience;
  uint64_t seed;
  enum DatlConditioningMode conditioning_mode;
  uintptr_t encoder_hidden;
  uintptr_t latent_dim;
  uintptr_t head_hidden;
  double val_frac;
  uintptr_t window;
  uintptr_t stride;
} DatlTrainConfig;

/**
 * Accuracies of the classifier, adversary and nuisance network.
 */
typedef struct DatlAccuracy {
  double main_acc;
  double adv_acc;
  double nuis_acc;
} DatlAccuracy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *datl_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *datl_version(void);

struct DatlSynthConfig datl_synth_config_default(void);

struct DatlTrainConfig datl_train_config_default(void);

/**
 * Generates a synthetic dataset.
 *
 * # Safety
 * `config` must point to a valid config and `out` to writable storage.
 */
enum DatlStatus datl_synth_generate(const struct DatlSynthConfig *config, struct DatlDataset **out);

/**
 * Loads a dataset manifest, keeping one relaxation trial per subject.
 *
 * # Safety
 * `manifest_path` must be a NUL-terminated string; `out` must be writable.
 */
enum DatlStatus datl_dataset_load(const char *manifest_path, struct DatlDataset **out);

/**
 * Number of trials, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
uintptr_t datl_dataset_num_trials(const struct DatlDataset *dataset);

/**
 * Number of subject classes, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
uintptr_t datl_dataset_num_subjects(const struct DatlDataset *dataset);

/**
 * # Safety
 * `dataset` must be null or a handle not yet freed.
 */
void datl_dataset_free(struct DatlDataset *dataset);

/**
 * Trains on every subject except `held_out_subject` and returns the model
 * together with the held-out accuracies.
 *
 * # Safety
 * Pointers must be valid; `out_accuracy` may be null.
 */
enum DatlStatus datl_train_fold(const struct DatlDataset *dataset,
                                const struct DatlTrainConfig *config,
                                uintptr_t held_out_subject,
                                struct DatlModel **out_model,
                                struct DatlAccuracy *out_accuracy);

/**
 * Loads a checkpoint written by [`datl_model_save`] or `datl train`. The
 * loaded model applies no standardization.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DatlStatus datl_model_load(const char *path, struct DatlModel **out);

/**
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum DatlStatus datl_model_save(const struct DatlModel *model, const char *path);

/**
 * Scores all three heads on every trial of `dataset`.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum DatlStatus datl_model_evaluate(const struct DatlModel *model,
                                    const struct DatlDataset *dataset,
                                    enum DatlConditioningMode mode,
                                    struct DatlAccuracy *out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void datl_model_free(struct DatlModel *model);

/**
 * Leave-one-subject-out evaluation on `jobs` worker threads.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum DatlStatus datl_run_loso(const struct DatlDataset *dataset,
                              const struct DatlTrainConfig *config,
                              uintptr_t jobs,
                              struct DatlSweepRow **out);

/**
 * Pooled accuracies of a LOSO run.
 *
 * # Safety
 * `row` must be a live handle and `out` writable.
 */
enum DatlStatus datl_sweep_row_accuracy(const struct DatlSweepRow *row, struct DatlAccuracy *out);

/**
 * Number of folds, or 0 for a null handle.
 *
 * # Safety
 * `row` must be null or a live handle.
 */
uintptr_t datl_sweep_row_num_folds(const struct DatlSweepRow *row);

/**
 * Held-out subject and main accuracy of fold `index`. A diverged fold
 * reports [`DatlStatus::NonFinite`].
 *
 * # Safety
 * `row` must be a live handle; outputs must be writable.
 */
enum DatlStatus datl_sweep_row_fold(const struct DatlSweepRow *row,
                                    uintptr_t index,
                                    uintptr_t *out_subject,
                                    double *out_main_acc);

/**
 * # Safety
 * `row` must be null or a handle not yet freed.
 */
void datl_sweep_row_free(struct DatlSweepRow *row);

/**
 * Finite-difference gradient check of a small random model; writes the
 * maximum relative error.
 *
 * # Safety
 * `out_error` must be writable.
 */
enum DatlStatus datl_gradcheck(uint64_t seed, double eps, double *out_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DATL_H */
