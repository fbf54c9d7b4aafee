#include <math.h>
#include <stdio.h>
#include <string.h>

#include "vec_offload.h"

int main(int argc, char **argv) {
    if (argc < 2) return 64;
    VoScenario *sc = NULL;
    if (vo_scenario_load("/nonexistent.toml", &sc) != VO_STATUS_IO || sc != NULL) return 1;
    if (vo_last_error() == NULL) return 2;
    if (vo_scenario_load(argv[1], &sc) != VO_STATUS_OK) {
        fprintf(stderr, "%s\n", vo_last_error());
        return 3;
    }
    VoAssignment *a = NULL;
    if (vo_solve(sc, VO_ALGORITHM_SA_ROUND, VO_QUALITY_MEDIUM, 1, 10.0, &a) != VO_STATUS_OK) return 4;
    double sum = 0.0;
    for (size_t i = 0; i < vo_assignment_len(a); i++) {
        VoSelection s;
        if (vo_assignment_get(a, i, &s) != VO_STATUS_OK) return 5;
        sum += s.utility;
    }
    if (fabs(sum - vo_assignment_total_utility(a)) > 1e-6) return 6;
    VoSelection s;
    if (vo_assignment_get(a, vo_assignment_len(a), &s) != VO_STATUS_OUT_OF_RANGE) return 7;
    vo_assignment_free(a);

    VoSimOptions o = vo_sim_options_default();
    o.duration_s = 5.0;
    VoMetrics m;
    if (vo_simulate(sc, &o, &m) != VO_STATUS_OK) return 8;
    if (m.cycles != 1 || m.deadline_misses != 0 || m.offloaded_jobs == 0) return 9;
    o.mode = 7;
    if (vo_simulate(sc, &o, &m) != VO_STATUS_INVALID_ARGUMENT) return 10;
    vo_scenario_free(sc);
    printf("ok %s %zu\n", vo_version(), (size_t)m.cycles);
    return 0;
}
