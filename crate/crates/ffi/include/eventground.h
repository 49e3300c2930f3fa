#ifndef EVENTGROUND_H
#define EVENTGROUND_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum EgStatus {
  EG_STATUS_OK = 0,
  EG_STATUS_NULL_ARGUMENT = 1,
  EG_STATUS_INVALID_UTF8 = 2,
  EG_STATUS_INVALID_ARGUMENT = 3,
  EG_STATUS_IO = 4,
  EG_STATUS_PARSE = 5,
  EG_STATUS_HIERARCHY = 6,
  EG_STATUS_UNKNOWN_EVENT = 7,
  EG_STATUS_CHECKPOINT = 8,
  EG_STATUS_METRIC = 9,
  EG_STATUS_PANIC = 10,
} EgStatus;

/**
 * Knowledge base plus its hierarchy forest.
 */
typedef struct EgKb EgKb;

/**
 * Trained mention encoder plus an index over every KB event.
 */
typedef struct EgLinker EgLinker;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string; do not free.
 */
const char *eg_version(void);

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *eg_last_error(void);

/**
 * Releases a string returned through an `out_json` argument.
 *
 * # Safety
 * `s` must be null or a pointer obtained from this library, freed once.
 */
void eg_string_free(char *s);

/**
 * Loads `events.jsonl` and `relations.jsonl` and builds the forest.
 *
 * # Safety
 * Path arguments must be NUL-terminated strings; `out` must be writable.
 */
enum EgStatus eg_kb_load(const char *events_path,
                         const char *relations_path,
                         size_t max_height,
                         struct EgKb **out);

/**
 * # Safety
 * `kb` must be null or a handle from [`eg_kb_load`], freed once.
 */
void eg_kb_free(struct EgKb *kb);

/**
 * Number of events in the knowledge base.
 *
 * # Safety
 * `kb` must be a live handle; `out` must be writable.
 */
enum EgStatus eg_kb_len(const struct EgKb *kb, size_t *out);

/**
 * The event and its ancestors, nearest first, as a JSON array of ids.
 *
 * # Safety
 * `kb` must be a live handle, `event_id` a NUL-terminated string and
 * `out_json` writable. Free the result with [`eg_string_free`].
 */
enum EgStatus eg_kb_ancestor_chain(const struct EgKb *kb, const char *event_id, char **out_json);

/**
 * Loads a checkpoint and indexes every event of `kb`. In multilingual
 * mode, `languages_json` lists the mention languages to index (a JSON
 * array of codes); it is ignored otherwise and may be null.
 *
 * # Safety
 * `kb` must be a live handle, string arguments NUL-terminated (or null
 * where allowed) and `out` writable.
 */
enum EgStatus eg_linker_new(const struct EgKb *kb,
                            const char *checkpoint_path,
                            bool multilingual,
                            const char *languages_json,
                            struct EgLinker **out);

/**
 * # Safety
 * `linker` must be null or a handle from [`eg_linker_new`], freed once.
 */
void eg_linker_free(struct EgLinker *linker);

/**
 * Top-`k` events for one mention given as a JSON object with `id`,
 * `language`, `context`, `span_start`, `span_end` and `anchor_event`
 * (the anchor may be any string). Writes a retrieval record as JSON.
 *
 * # Safety
 * `linker` must be a live handle, `mention_json` NUL-terminated and
 * `out_json` writable. Free the result with [`eg_string_free`].
 */
enum EgStatus eg_linker_topk(const struct EgLinker *linker,
                             const char *mention_json,
                             size_t k,
                             char **out_json);

/**
 * Metrics over a JSON array of evaluation records (`mention_id`, `gold`,
 * `atomic`, `retrieved`, optional `predicted` and `reranked`). Writes a
 * flat JSON object: Recall@min, Recall@k for every k up to the shortest
 * retrieval list, and set metrics when every record has a prediction.
 *
 * # Safety
 * `records_json` must be NUL-terminated and `out_json` writable. Free the
 * result with [`eg_string_free`].
 */
enum EgStatus eg_evaluate_json(const char *records_json, char **out_json);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* EVENTGROUND_H */
