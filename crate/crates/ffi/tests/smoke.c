#include <math.h>
#include <stdio.h>
#include "popcoupling.h"

int main(void) {
    const double a[] = {0.0, 1.0};
    const double b[] = {0.9, 10.0};
    PcMeasure *mu = NULL, *nu = NULL;
    if (pc_measure_new("age", a, 2, NULL, &mu) != PC_STATUS_OK) return 1;
    if (pc_measure_new("age", b, 2, NULL, &nu) != PC_STATUS_OK) return 1;
    PcCost cost = {PC_COST_KIND_TRUNC_ABS, 2.0};
    double value = 0.0;
    if (pc_transport_cost(mu, nu, cost, &value, NULL) != PC_STATUS_OK) return 2;
    pc_measure_free(mu);
    pc_measure_free(nu);
    if (fabs(value - 1.05) > 1e-12) return 3;
    if (pc_transport_cost(NULL, NULL, cost, &value, NULL) != PC_STATUS_NULL_POINTER) return 4;
    printf("%s\n", pc_last_error_message());
    return 0;
}
