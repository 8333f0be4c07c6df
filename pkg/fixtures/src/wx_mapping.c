/* Maps one page both writable and executable, the classic staging area
 * for self-modifying payloads. The region exists before READY, so a
 * single snapshot sees it. */
#include "common.h"

#include <string.h>
#include <sys/mman.h>

int main(void)
{
    void *region = mmap(NULL, 4096, PROT_READ | PROT_WRITE | PROT_EXEC,
                        MAP_PRIVATE | MAP_ANONYMOUS, -1, 0);

    if (region == MAP_FAILED)
        unsupported("kernel refused a writable-executable mapping");
    /* dirty the page so it is unmistakably live memory */
    memset(region, 0xC3, 64);

    serve(NULL);

    munmap(region, 4096);
    return 0;
}
