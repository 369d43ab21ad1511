#include <stdio.h>
#include <string.h>
#include "skycat.h"

int main(void) {
    uint64_t id = 0;
    if (skycat_htm_lookup(45.0, 45.0, 20, &id) != SKYCAT_STATUS_OK) return 1;
    if (skycat_htm_lookup(0.0, 100.0, 20, &id) != SKYCAT_STATUS_INVALID_ARGUMENT) return 2;
    if (strlen(skycat_last_error()) == 0) return 3;
    skycat_htm_lookup(45.0, 45.0, 20, &id);

    SkycatCatalog *cat = NULL;
    if (skycat_catalog_generate(500, 1, &cat) != SKYCAT_STATUS_OK) return 4;
    uint64_t n = 0;
    if (skycat_filter_count(cat, "PhotoObj", NULL, &n) != SKYCAT_STATUS_OK || n != 500) return 5;
    SkycatHits *hits = NULL;
    if (skycat_cone_search(cat, 0.0, 0.0, 90.0, "r < 30", 10, &hits) != SKYCAT_STATUS_OK) return 6;
    if (skycat_hits_len(hits) > 10) return 7;
    skycat_hits_free(hits);
    skycat_catalog_free(cat);
    printf("%llu ok\n", (unsigned long long)id);
    return 0;
}
