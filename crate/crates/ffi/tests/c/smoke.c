#include <stdio.h>
#include <string.h>

#include "seeknet.h"

static const char *SCENARIO =
    "{\"name\": \"c-smoke\","
    " \"nodes\": [{\"id\": 0, \"x\": 0, \"y\": 0}, {\"id\": 1, \"x\": 300, \"y\": 0, \"role\": \"gateway\"}],"
    " \"sessions\": [{\"src\": 0, \"dst\": 1, \"rate_pps\": 50, \"stop_s\": 4}],"
    " \"sim\": {\"duration_s\": 5, \"warmup_s\": 0}}";

int main(void) {
    SeeknetScenario *sc = NULL;
    if (seeknet_scenario_from_json("{", &sc) != SEEKNET_STATUS_INVALID_SCENARIO || seeknet_last_error() == NULL) {
        return 10;
    }
    if (seeknet_scenario_from_json(SCENARIO, &sc) != SEEKNET_STATUS_OK) {
        fprintf(stderr, "%s\n", seeknet_last_error());
        return 11;
    }
    SeeknetRun *run = NULL;
    if (seeknet_run(sc, 1, &run) != SEEKNET_STATUS_OK) {
        return 12;
    }
    SeeknetFlowSummary agg;
    if (seeknet_run_flow(run, 1, &agg) != SEEKNET_STATUS_OK || agg.sent != 200) {
        return 13;
    }
    if (seeknet_run_flow(run, 2, &agg) != SEEKNET_STATUS_OUT_OF_RANGE) {
        return 14;
    }
    uint64_t digest = 0;
    seeknet_run_trace_digest(run, &digest);
    char *json = NULL;
    if (seeknet_run_report_json(run, &json) != SEEKNET_STATUS_OK || strstr(json, "\"c-smoke\"") == NULL) {
        return 15;
    }
    printf("%016llx %llu\n", (unsigned long long)digest, (unsigned long long)agg.received);
    seeknet_string_free(json);
    seeknet_run_free(run);
    seeknet_scenario_free(sc);
    return 0;
}
