/* Negative control: an ordinary dynamically linked program doing
 * ordinary things. Opens a file, touches the heap, then idles. Every
 * appraisal rule should stay quiet on this process. */
#include "common.h"

#include <stdio.h>
#include <stdlib.h>
#include <string.h>

int main(void)
{
    char *scratch = malloc(4096);
    FILE *f = fopen("/etc/hostname", "r");

    if (!scratch)
        die("malloc");
    memset(scratch, 'x', 4096);

    serve(NULL);

    if (f)
        fclose(f);
    free(scratch);
    return 0;
}
