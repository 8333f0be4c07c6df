/* Redirects a resolved global-offset-table entry to a function inside
 * this binary, the way an in-process hook steals a libc call.
 *
 * Built without PIE, with lazy binding, and with the relocation table
 * left writable, so the getpid slot can be found (see jumpslot.h) and
 * overwritten. getpid is called once before READY so the slot holds a
 * real libc address in the first snapshot; trigger swaps it for the
 * hook.
 */
#include "common.h"
#include "jumpslot.h"

#include <unistd.h>

static long hook_getpid(void)
{
    return 42;
}

static uintptr_t *slot;

static int overwrite_slot(void)
{
    *slot = (uintptr_t)hook_getpid;
    /* demonstrate the hook took: the next call lands in hook_getpid */
    return getpid() == 42 ? 0 : -1;
}

int main(void)
{
    getpid(); /* force lazy resolution: the slot now points into libc */

    slot = find_jump_slot("getpid");
    if (!slot)
        unsupported("no jump-slot relocation for getpid");

    serve(overwrite_slot);
    return 0;
}
