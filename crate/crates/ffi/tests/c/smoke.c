#include <math.h>
#include <stdio.h>
#include "commeco.h"

int main(void) {
    enum { T = 40 };
    double series[2 * T];
    double x0 = 1.0, x1 = 2.0;
    for (int w = 0; w < T; w++) {
        series[w] = x0;
        series[T + w] = x1;
        double e0 = 0.3 * sin(1.7 * w), e1 = 0.3 * cos(0.9 * w);
        double n0 = 1.0 + 0.5 * x0 + 0.2 * x1 + e0;
        double n1 = 1.5 + 0.1 * x0 + 0.4 * x1 + e1;
        x0 = n0;
        x1 = n1;
    }
    CommecoJacobians *j = NULL;
    if (commeco_smap_fit(series, 2, T, 0.0, 0.5, 0.0, &j) != COMMECO_STATUS_OK) {
        fprintf(stderr, "fit failed: %s\n", commeco_last_error());
        return 1;
    }
    CommecoEpisodes *e = NULL;
    if (commeco_episodes_extract(j, &e) != COMMECO_STATUS_OK) return 2;
    size_t n = commeco_episodes_len(e);
    printf("steps=%zu episodes=%zu\n", (size_t)commeco_jacobians_len(j), n);
    commeco_episodes_free(e);
    commeco_jacobians_free(j);
    if (commeco_smap_fit(NULL, 2, T, 0.0, 0.5, 0.0, &j) != COMMECO_STATUS_NULL_POINTER) return 3;
    return n > 0 ? 0 : 4;
}
