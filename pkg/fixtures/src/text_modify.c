/* Modifies the running program's text, two ways:
 *
 *   patch  - flip one byte inside a never-called function, restoring
 *            the original page permissions afterwards. The text
 *            mapping keeps looking ordinary; only its content
 *            diverges from the on-disk file.
 *
 *   remap  - replace every file-backed mapping of the executable with
 *            an anonymous copy (text kept writable and executable).
 *            The image bytes are unchanged, but the process no longer
 *            has any file-backed mapping of its own executable, the
 *            shape left behind by image-replacement loaders.
 *
 * The variant is argv[1] and the change happens on trigger, so a first
 * snapshot records the clean state.
 */
#define _GNU_SOURCE /* mremap */
#include "common.h"

#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <sys/mman.h>
#include <unistd.h>

#define MAX_REGIONS 64

struct region {
    uintptr_t start;
    uintptr_t end;
    char perms[5];
};

/* victim for the patch variant: never called, so corrupting it is safe */
__attribute__((noinline, used)) static long quiet_victim(long x)
{
    return x * 2654435761u;
}

static int patch_one_byte(void)
{
    uint8_t *target = (uint8_t *)quiet_victim + 4;
    uint8_t *page = (uint8_t *)((uintptr_t)target & ~0xFFFUL);

    /* keep execute while writing: the caller runs from this segment */
    if (mprotect(page, 4096, PROT_READ | PROT_WRITE | PROT_EXEC) != 0)
        return -1;
    *target ^= 0xFF;
    if (mprotect(page, 4096, PROT_READ | PROT_EXEC) != 0)
        return -1;
    return 0;
}

static int exe_regions(struct region out[], int max)
{
    char self[4096];
    char line[4096];
    ssize_t n = readlink("/proc/self/exe", self, sizeof self - 1);
    FILE *f;
    int count = 0;

    if (n < 0)
        return -1;
    self[n] = '\0';

    f = fopen("/proc/self/maps", "r");
    if (!f)
        return -1;
    while (fgets(line, sizeof line, f) && count < max) {
        unsigned long start, end;
        char perms[5];
        unsigned long offset;
        char path[4096];

        if (sscanf(line, "%lx-%lx %4s %lx %*s %*s %4095[^\n]",
                   &start, &end, perms, &offset, path) != 5)
            continue;
        if (strcmp(path, self) != 0)
            continue;
        out[count].start = start;
        out[count].end = end;
        memcpy(out[count].perms, perms, 5);
        count++;
    }
    fclose(f);
    return count;
}

static int remap_anonymous(void)
{
    struct region regions[MAX_REGIONS];
    int count = exe_regions(regions, MAX_REGIONS);

    if (count <= 0)
        return -1;

    /* text last: every other region is safe to swap while executing */
    for (int pass = 0; pass < 2; pass++) {
        for (int i = 0; i < count; i++) {
            struct region *r = &regions[i];
            size_t len = r->end - r->start;
            int is_text = r->perms[2] == 'x';
            int prot;
            void *copy;

            if ((pass == 0) == is_text)
                continue;
            if (r->perms[0] != 'r') {
                /* unreadable gap: nothing to copy, just detach it */
                if (mmap((void *)r->start, len, PROT_NONE,
                         MAP_PRIVATE | MAP_ANONYMOUS | MAP_FIXED,
                         -1, 0) == MAP_FAILED)
                    return -1;
                continue;
            }
            prot = is_text ? PROT_READ | PROT_WRITE | PROT_EXEC
                           : PROT_READ |
                             (r->perms[1] == 'w' ? PROT_WRITE : 0);
            copy = mmap(NULL, len, PROT_READ | PROT_WRITE,
                        MAP_PRIVATE | MAP_ANONYMOUS, -1, 0);
            if (copy == MAP_FAILED)
                return -1;
            memcpy(copy, (void *)r->start, len);
            if (mprotect(copy, len, prot) != 0)
                return -1;
            /* atomic replacement: the next fetch from this address
             * range hits the identical anonymous copy */
            if (mremap(copy, len, len, MREMAP_MAYMOVE | MREMAP_FIXED,
                       (void *)r->start) == MAP_FAILED)
                return -1;
        }
    }
    return 0;
}

int main(int argc, char **argv)
{
    int (*variant)(void);

    if (argc != 2)
        die("usage: text_modify patch|remap");
    if (strcmp(argv[1], "patch") == 0)
        variant = patch_one_byte;
    else if (strcmp(argv[1], "remap") == 0)
        variant = remap_anonymous;
    else
        die("unknown variant");

    serve(variant);
    return 0;
}
