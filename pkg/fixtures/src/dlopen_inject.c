/* Loads a shared object that is not among the program's link-time
 * dependencies, the way an in-memory injector would pull in a payload
 * library. argv[1] names the payload; it is loaded on trigger so a
 * first snapshot can record the clean state. */
#include "common.h"

#include <dlfcn.h>

static const char *payload_path;

static int load_payload(void)
{
    void *handle = dlopen(payload_path, RTLD_NOW);

    if (!handle)
        return -1;
    /* keep the handle: the mapping must persist for the second snapshot */
    return 0;
}

int main(int argc, char **argv)
{
    if (argc != 2)
        die("usage: dlopen_inject <payload.so>");
    payload_path = argv[1];

    serve(load_payload);
    return 0;
}
