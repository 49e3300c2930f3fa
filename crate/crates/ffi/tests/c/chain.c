#include <stdio.h>
#include "eventground.h"

int main(int argc, char **argv) {
    if (argc != 4) {
        return 2;
    }
    EgKb *kb = NULL;
    EgStatus status = eg_kb_load(argv[1], argv[2], 3, &kb);
    if (status != EG_STATUS_OK) {
        fprintf(stderr, "%s\n", eg_last_error());
        return 1;
    }
    char *chain = NULL;
    status = eg_kb_ancestor_chain(kb, argv[3], &chain);
    if (status != EG_STATUS_OK) {
        fprintf(stderr, "%d %s\n", (int)status, eg_last_error());
        eg_kb_free(kb);
        return 1;
    }
    printf("%s\n", chain);
    eg_string_free(chain);
    eg_kb_free(kb);
    return 0;
}
