/* Minimal C consumer: parse a config, run one simulation, print the report.
 *
 * Build (from the workspace root, after `cargo build -p memlearn-ffi`):
 *   cc crates/memlearn-ffi/examples/demo.c \
 *      -Icrates/memlearn-ffi/include \
 *      target/debug/libmemlearn_ffi.a -lpthread -ldl -lm -o demo
 */
#include <stdio.h>
#include <stdlib.h>

#include "memlearn.h"

static const char *CONFIG =
    "[trace.synthetic]\n"
    "generator = \"stride\"\n"
    "stride_lines = 2\n"
    "pages = 1\n"
    "length = 20000\n"
    "seed = 3\n"
    "[prefetcher]\n"
    "kind = \"stride\"\n"
    "degree = 4\n";

int main(void) {
    MlConfig *cfg = NULL;
    MlReport *report = NULL;
    char *json = NULL;
    int rc;

    rc = ml_config_parse(CONFIG, &cfg);
    if (rc != ML_OK) {
        fprintf(stderr, "config: %s\n", ml_last_error());
        return rc;
    }
    ml_config_set_seed(cfg, 42);

    rc = ml_simulate(cfg, &report);
    if (rc != ML_OK) {
        fprintf(stderr, "simulate: %s\n", ml_last_error());
        ml_config_free(cfg);
        return rc;
    }

    printf("instructions: %llu\n", (unsigned long long)ml_report_instructions(report));
    printf("total cycles: %llu\n", (unsigned long long)ml_report_total_cycles(report));
    printf("LLC demand misses: %llu\n", (unsigned long long)ml_report_llc_misses(report));

    rc = ml_report_json(report, &json);
    if (rc == ML_OK) {
        printf("%s", json);
        ml_string_free(json);
    }

    ml_report_free(report);
    ml_config_free(cfg);
    return 0;
}
