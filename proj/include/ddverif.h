/* SPDX-License-Identifier: Apache-2.0 */
#ifndef DDVERIF_H
#define DDVERIF_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Error codes shared by every entry point (and the CLI's exit codes). */
enum {
  DDV_OK = 0,
  DDV_ERR_CONFIG = 1,         /* invalid configuration / unreadable input */
  DDV_ERR_NO_CONVERGENCE = 2, /* iterative solver hit its iteration cap */
  DDV_ERR_ADMISSIBILITY = 3,  /* recovered fields violate an invariant */
  DDV_ERR_INTERNAL = 4
};

typedef struct ddv_experiment ddv_experiment;

/* Creates an experiment from a JSON configuration document. Recognized keys:
 * m, nsd, methods, tol, estimate_every, out, E, nu, traction, L, m_ref,
 * map_iterations. On success *out owns the handle. */
int ddv_experiment_create(const char* json_text, ddv_experiment** out);
int ddv_experiment_create_from_file(const char* path, ddv_experiment** out);

/* Runs the whole study matrix and writes table1.csv, per-cell convergence
 * histories, reports and element maps into the configured directory. */
int ddv_experiment_run(ddv_experiment* exp);

/* Path of the produced summary table; valid after a successful run. */
const char* ddv_experiment_table_path(const ddv_experiment* exp);

void ddv_experiment_destroy(ddv_experiment* exp);

/* Summarizes a table1-shaped CSV (effectivities, parallel/sequential
 * deviations, stagnation iterations). *out_summary is heap-allocated; free
 * with ddv_string_free. */
int ddv_compare_reports(const char* table_csv_path, char** out_summary);
void ddv_string_free(char* s);

/* Writes nodes.csv / elems.csv for the L-shaped test geometry. */
int ddv_mesh_export(int m, double L, const char* out_dir);

/* Message of the last failure on this thread. */
const char* ddv_last_error(void);

const char* ddv_version(void);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* DDVERIF_H */
