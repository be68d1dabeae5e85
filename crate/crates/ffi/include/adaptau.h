#ifndef ADAPTAU_H
#define ADAPTAU_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AdaptauStrategy {
  ADAPTAU_STRATEGY_NO_NORM = 0,
  ADAPTAU_STRATEGY_FIXED_TAU = 1,
  ADAPTAU_STRATEGY_ADAP_TAU0 = 2,
  ADAPTAU_STRATEGY_ADAP_TAU = 3,
} AdaptauStrategy;

typedef enum AdaptauStatus {
  ADAPTAU_STATUS_OK = 0,
  ADAPTAU_STATUS_NULL_POINTER = 1,
  ADAPTAU_STATUS_INVALID_ARGUMENT = 2,
  ADAPTAU_STATUS_IO = 3,
  ADAPTAU_STATUS_PARSE = 4,
  ADAPTAU_STATUS_NUMERICAL = 5,
  ADAPTAU_STATUS_PANIC = 6,
} AdaptauStatus;

typedef enum AdaptauFormat {
  ADAPTAU_FORMAT_ADJACENCY_LIST = 0,
  ADAPTAU_FORMAT_PAIR_LIST = 1,
} AdaptauFormat;

/**
 * Train/test split.
 */
typedef struct AdaptauDataset AdaptauDataset;

typedef struct AdaptauTable AdaptauTable;

typedef struct AdaptauTrainer AdaptauTrainer;

/**
 * Training settings; start from [`adaptau_train_config_default`].
 */
typedef struct AdaptauTrainConfig {
  enum AdaptauStrategy strategy;
  /**
   * Only used by `FixedTau`.
   */
  double tau;
  size_t dim;
  double lr;
  double l2;
  size_t batch_size;
  size_t negatives;
  uint64_t seed;
} AdaptauTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread; do not free.
 */
const char *adaptau_last_error(void);

struct AdaptauTrainConfig adaptau_train_config_default(void);

/**
 * Loads `dir/train.txt` and `dir/test.txt` when `path` is a directory,
 * otherwise reads one file and splits it per user with `train_fraction`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum AdaptauStatus adaptau_dataset_load(const char *path,
                                        enum AdaptauFormat format,
                                        double train_fraction,
                                        uint64_t seed,
                                        struct AdaptauDataset **out_dataset);

/**
 * Zipf-popularity synthetic interactions split 80/20.
 *
 * # Safety
 * `out_dataset` must be writable.
 */
enum AdaptauStatus adaptau_dataset_synthetic(size_t users,
                                             size_t items,
                                             double mean_degree,
                                             uint64_t seed,
                                             struct AdaptauDataset **out_dataset);

/**
 * # Safety
 * `dataset` must be a live handle; the out-pointers may be null.
 */
enum AdaptauStatus adaptau_dataset_shape(const struct AdaptauDataset *dataset,
                                         size_t *users,
                                         size_t *items,
                                         size_t *train_pairs,
                                         size_t *test_pairs);

/**
 * # Safety
 * `dataset` must come from this library and not be used afterwards.
 */
void adaptau_dataset_free(struct AdaptauDataset *dataset);

/**
 * The trainer copies what it needs; `dataset` may be freed afterwards.
 *
 * # Safety
 * `dataset` and `config` must be valid; `out_trainer` writable.
 */
enum AdaptauStatus adaptau_trainer_new(const struct AdaptauDataset *dataset,
                                       const struct AdaptauTrainConfig *config,
                                       struct AdaptauTrainer **out_trainer);

/**
 * One pass over the training pairs. `mean_loss` and `tau0` may be null.
 *
 * # Safety
 * `trainer` must be a live handle.
 */
enum AdaptauStatus adaptau_trainer_epoch(struct AdaptauTrainer *trainer,
                                         double *mean_loss,
                                         double *tau0);

/**
 * Full-ranking recall@k and NDCG@k on the test split.
 *
 * # Safety
 * `trainer` must be a live handle; out-pointers may be null.
 */
enum AdaptauStatus adaptau_trainer_evaluate(const struct AdaptauTrainer *trainer,
                                            size_t k,
                                            double *recall,
                                            double *ndcg);

/**
 * Current temperature of `user` (the global one for non-adaptive strategies).
 *
 * # Safety
 * `trainer` must be a live handle; `out_tau` writable.
 */
enum AdaptauStatus adaptau_trainer_user_tau(const struct AdaptauTrainer *trainer,
                                            size_t user,
                                            double *out_tau);

/**
 * Snapshot of the scoring embeddings.
 *
 * # Safety
 * `trainer` must be a live handle; `out_table` writable.
 */
enum AdaptauStatus adaptau_trainer_table(const struct AdaptauTrainer *trainer,
                                         struct AdaptauTable **out_table);

/**
 * # Safety
 * `trainer` must come from this library and not be used afterwards.
 */
void adaptau_trainer_free(struct AdaptauTrainer *trainer);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out_table` writable.
 */
enum AdaptauStatus adaptau_table_load(const char *path, struct AdaptauTable **out_table);

/**
 * # Safety
 * `table` must be a live handle; `path` a NUL-terminated string.
 */
enum AdaptauStatus adaptau_table_save(const struct AdaptauTable *table, const char *path);

/**
 * # Safety
 * `table` must be a live handle; out-pointers may be null.
 */
enum AdaptauStatus adaptau_table_shape(const struct AdaptauTable *table,
                                       size_t *users,
                                       size_t *items,
                                       size_t *dim);

/**
 * Score of `(user, item)` under the table's normalization mode.
 *
 * # Safety
 * `table` must be a live handle; `out_score` writable.
 */
enum AdaptauStatus adaptau_table_score(const struct AdaptauTable *table,
                                       size_t user,
                                       size_t item,
                                       double *out_score);

/**
 * # Safety
 * `table` must come from this library and not be used afterwards.
 */
void adaptau_table_free(struct AdaptauTable *table);

/**
 * Principal branch of the Lambert W function.
 *
 * # Safety
 * `out` must be writable.
 */
enum AdaptauStatus adaptau_lambert_w(double x, double *out_w);

/**
 * Global temperature from positive / overall mean cosine, clamped to
 * `[tau_min, tau_max]`.
 *
 * # Safety
 * `out_tau` must be writable.
 */
enum AdaptauStatus adaptau_tau0(double mu_plus,
                                double mu,
                                size_t users,
                                size_t items,
                                size_t positives,
                                double tau_min,
                                double tau_max,
                                double *out_tau);

/**
 * Per-user temperature for a user with mean loss `loss` when the population
 * mean is `threshold`.
 *
 * # Safety
 * `out_tau` must be writable.
 */
enum AdaptauStatus adaptau_tau_user(double loss,
                                    double threshold,
                                    double beta,
                                    double tau0,
                                    double *out_tau);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADAPTAU_H */
