#include <stdio.h>
#include "wallcast.h"

int main(void) {
    size_t plan[] = {1, 128, 64, 32, 8};
    size_t n = 0;
    if (wc_count_params(plan, 5, 100, &n) != WC_STATUS_OK || n != 467332) return 1;

    double obs[] = {1.0, 2.0, 4.0};
    WcScores s;
    if (wc_score(obs, obs, 3, &s) != WC_STATUS_OK || s.ioa != 1.0) return 2;

    WcBaseModel *m = NULL;
    if (wc_base_model_load("/nonexistent/t3.json", &m) != WC_STATUS_DATA || m != NULL) return 3;
    if (wc_last_error() == NULL) return 4;
    printf("ok %zu\n", n);
    return 0;
}
