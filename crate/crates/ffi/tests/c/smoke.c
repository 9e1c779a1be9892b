#include <stdio.h>
#include <string.h>
#include "segrid.h"

#define CHECK(call)                                                         \
  do {                                                                      \
    SegridStatus s_ = (call);                                               \
    if (s_ != SEGRID_STATUS_OK) {                                           \
      fprintf(stderr, "%s -> %d: %s\n", #call, s_, segrid_last_error_message()); \
      return 1;                                                             \
    }                                                                       \
  } while (0)

int main(int argc, char **argv) {
  if (argc != 2) return 2;
  SegridScenario *scen = NULL;
  CHECK(segrid_scenario_from_path(argv[1], &scen));

  size_t n_d = 0, n_g = 0;
  CHECK(segrid_scenario_dims(scen, &n_d, &n_g));

  SegridReport *rep = NULL;
  CHECK(segrid_run(scen, &rep));
  SegridRunStatus status;
  CHECK(segrid_report_status(rep, &status));

  double p_g[16];
  size_t len = 0;
  CHECK(segrid_report_p_g(rep, p_g, 16, &len));
  if (len != n_g) return 3;
  printf("status=%d n_d=%zu n_g=%zu", (int)status, n_d, n_g);
  for (size_t j = 0; j < len; j++) printf(" %.6f", p_g[j]);
  printf("\n");

  SegridScenario *bad = NULL;
  if (segrid_scenario_from_toml("name = ", &bad) != SEGRID_STATUS_INVALID_INPUT) return 4;
  if (segrid_last_error_message() == NULL) return 5;

  segrid_report_free(rep);
  segrid_scenario_free(scen);
  return 0;
}
