#include <stdio.h>
#include "ministone.h"

int main(void) {
    MsEngine *e = ms_engine_new();
    uint32_t n = ms_engine_action_count(e);
    uint8_t mask[512];
    MsState *s = NULL;
    if (n > sizeof mask || ms_match_new(e, 0, 1, NULL, 0, NULL, 0, 7, &s) != MS_STATUS_OK) return 1;
    uint64_t step = 0;
    while (ms_state_to_move(s) >= 0) {
        uint16_t a;
        if (ms_legal_mask(e, s, mask, n) != MS_STATUS_OK) return 2;
        if (ms_greedy_action(e, s, &a) != MS_STATUS_OK || !mask[a]) return 3;
        if (ms_step(e, s, a, NULL) != MS_STATUS_OK) return 4;
        step++;
    }
    printf("%d %llu\n", ms_state_outcome(s), (unsigned long long)step);
    ms_state_free(s);
    ms_engine_free(e);
    return 0;
}
