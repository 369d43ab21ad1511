#ifndef SKYCAT_H
#define SKYCAT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  SKYCAT_STATUS_OK = 0,
  SKYCAT_STATUS_INVALID_ARGUMENT = 1,
  SKYCAT_STATUS_NOT_FOUND = 2,
  SKYCAT_STATUS_IO = 3,
  SKYCAT_STATUS_FILTER = 4,
  SKYCAT_STATUS_DEPENDENCY = 5,
  SKYCAT_STATUS_PANIC = 6,
  SKYCAT_STATUS_INTERNAL = 7,
} SkycatStatus;

/**
 * Opaque handle to an open catalog.
 */
typedef struct SkycatCatalog SkycatCatalog;

/**
 * Opaque list of hits, nearest first.
 */
typedef struct SkycatHits SkycatHits;

/**
 * Opaque list of cover ranges.
 */
typedef struct SkycatRanges SkycatRanges;

/**
 * Half-open range of trixel IDs.
 */
typedef struct {
  uint64_t lo;
  uint64_t hi;
} SkycatRange;

/**
 * One matched object. `distance` is in arcminutes.
 */
typedef struct {
  int64_t obj_id;
  double ra;
  double dec;
  double distance;
} SkycatHit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *skycat_last_error(void);

/**
 * Trixel ID containing (ra, dec) at `depth` (0..=20).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
SkycatStatus skycat_htm_lookup(double ra, double dec, uint8_t depth, uint64_t *out);

/**
 * Great-circle separation in degrees.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
SkycatStatus skycat_arc_angle(double ra1, double dec1, double ra2, double dec2, double *out);

/**
 * Cover of a circle at `depth`, as ranges of depth-`depth` IDs.
 *
 * # Safety
 * `out` must be a valid pointer; the result is freed with [`skycat_ranges_free`].
 */
SkycatStatus skycat_cover_circle(double ra,
                                 double dec,
                                 double radius_deg,
                                 uint8_t depth,
                                 SkycatRanges **out);

/**
 * Number of ranges; 0 for null.
 *
 * # Safety
 * `ranges` must be null or a live handle.
 */
size_t skycat_ranges_len(const SkycatRanges *ranges);

/**
 * Copies range `index` into `out`.
 *
 * # Safety
 * `ranges` must be a live handle and `out` a valid pointer.
 */
SkycatStatus skycat_ranges_get(const SkycatRanges *ranges, size_t index, SkycatRange *out);

/**
 * # Safety
 * `ranges` must be null or a handle not yet freed.
 */
void skycat_ranges_free(SkycatRanges *ranges);

/**
 * Opens (or creates) a catalog directory.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
SkycatStatus skycat_catalog_open(const char *dir, SkycatCatalog **out);

/**
 * An in-memory synthetic catalog of `n_objects` objects.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
SkycatStatus skycat_catalog_generate(size_t n_objects, uint64_t seed, SkycatCatalog **out);

/**
 * # Safety
 * `catalog` must be null or a handle not yet freed.
 */
void skycat_catalog_free(SkycatCatalog *catalog);

/**
 * Row count of a table, by name.
 *
 * # Safety
 * `catalog` must be a live handle, `table` a NUL-terminated string, `out` valid.
 */
SkycatStatus skycat_catalog_row_count(const SkycatCatalog *catalog,
                                      const char *table,
                                      uint64_t *out);

/**
 * PhotoObj rows within `radius_deg` of (ra, dec), nearest first. `predicate`
 * may be null; at most `limit` hits are returned.
 *
 * # Safety
 * `catalog` must be a live handle, `predicate` null or NUL-terminated, `out` valid.
 */
SkycatStatus skycat_cone_search(const SkycatCatalog *catalog,
                                double ra,
                                double dec,
                                double radius_deg,
                                const char *predicate,
                                size_t limit,
                                SkycatHits **out);

/**
 * # Safety
 * `hits` must be null or a live handle.
 */
size_t skycat_hits_len(const SkycatHits *hits);

/**
 * # Safety
 * `hits` must be a live handle and `out` a valid pointer.
 */
SkycatStatus skycat_hits_get(const SkycatHits *hits, size_t index, SkycatHit *out);

/**
 * # Safety
 * `hits` must be null or a handle not yet freed.
 */
void skycat_hits_free(SkycatHits *hits);

/**
 * Nearest primary object within `radius_arcmin`. Returns `NotFound` when there is none.
 *
 * # Safety
 * `catalog` must be a live handle and `out` a valid pointer.
 */
SkycatStatus skycat_nearest(const SkycatCatalog *catalog,
                            double ra,
                            double dec,
                            double radius_arcmin,
                            SkycatHit *out);

/**
 * Rows of `view` matching `predicate` (null matches all).
 *
 * # Safety
 * `catalog` must be a live handle, strings NUL-terminated, `out` valid.
 */
SkycatStatus skycat_filter_count(const SkycatCatalog *catalog,
                                 const char *view,
                                 const char *predicate,
                                 uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SKYCAT_H */
