#include <math.h>
#include <stdio.h>
#include <string.h>

#include "hqam_mimo.h"

#define CHECK(expr)                                                        \
    do {                                                                   \
        if (!(expr)) {                                                     \
            const char *err = hqam_last_error();                           \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #expr, \
                    err ? err : "no error");                               \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    double ratio = 2.0;
    HqamConstellation *c = NULL;
    CHECK(hqam_constellation_new(2, &ratio, 1, &c) == HQAM_STATUS_OK);
    CHECK(hqam_constellation_size(c) == 16);
    double re, im;
    CHECK(hqam_constellation_point(c, 0, &re, &im) == HQAM_STATUS_OK);
    CHECK(fabs(re - 3.0 / sqrt(10.0)) < 1e-12 && fabs(im - re) < 1e-12);
    hqam_constellation_free(c);

    HqamLdpcCode *code = NULL;
    CHECK(hqam_ldpc_new("5/6", 576, &code) == HQAM_STATUS_OK);
    size_t n = hqam_ldpc_n(code), k = hqam_ldpc_k(code);
    CHECK(n == 576 && k == 480);
    unsigned char info[480], cw[576], back[480];
    for (size_t i = 0; i < k; i++) info[i] = (unsigned char)((i * 7 + 3) % 5 == 0);
    CHECK(hqam_ldpc_encode(code, info, k, cw, n) == HQAM_STATUS_OK);
    double llr[576];
    for (size_t i = 0; i < n; i++) llr[i] = cw[i] ? -4.0 : 4.0;
    size_t iters = 99;
    bool ok = false;
    CHECK(hqam_ldpc_decode(code, llr, n, 50, 0.0, back, k, &iters, &ok) == HQAM_STATUS_OK);
    CHECK(ok && iters == 0 && memcmp(info, back, k) == 0);
    hqam_ldpc_free(code);

    HqamSimConfig *cfg = NULL;
    CHECK(hqam_config_from_preset("fig4", "nope", &cfg) == HQAM_STATUS_CONFIG);
    CHECK(hqam_last_error() != NULL);
    CHECK(hqam_config_parse("n = 576\nf_blocks = 4\nebn0_db = 30\nmax_frames = 3\ntiming = false\n",
                            &cfg) == HQAM_STATUS_OK);
    HqamResults *res = NULL;
    CHECK(hqam_run(cfg, &res) == HQAM_STATUS_OK);
    CHECK(hqam_results_len(res) == 3);
    HqamResultRow row;
    CHECK(hqam_results_row(res, 0, &row) == HQAM_STATUS_OK);
    CHECK(row.frames == 3 && isnan(row.seconds));
    char *layer = NULL;
    CHECK(hqam_results_layer(res, 0, &layer) == HQAM_STATUS_OK);
    CHECK(strcmp(layer, "base") == 0);
    hqam_string_free(layer);
    hqam_results_free(res);
    hqam_config_free(cfg);
    printf("ok\n");
    return 0;
}
