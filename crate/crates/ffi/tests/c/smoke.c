#include <stdio.h>
#include <string.h>

#include "gsr.h"

int main(void) {
    GsrConfig *cfg = NULL;
    if (gsr_config_new(&cfg) != GSR_STATUS_OK) return 1;
    if (gsr_config_set(cfg, "refine.beta_f=0.25") != GSR_STATUS_OK) return 2;
    if (gsr_config_set(cfg, "refine.beta_f=7") != GSR_STATUS_INVALID_CONFIG) return 3;
    const char *err = gsr_last_error();
    if (err == NULL || strstr(err, "beta_f") == NULL) return 4;

    char *text = NULL;
    if (gsr_config_to_toml(cfg, &text) != GSR_STATUS_OK) return 5;
    int found = strstr(text, "beta_f = 0.25") != NULL;
    gsr_string_free(text);
    gsr_config_free(cfg);
    if (!found) return 6;

    GsrDataset *ds = NULL;
    if (gsr_dataset_load("/nonexistent/dataset", &ds) == GSR_STATUS_OK || ds != NULL) return 7;
    printf("ok\n");
    return 0;
}
