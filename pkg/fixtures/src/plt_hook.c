/* Patches a procedure-linkage stub in place: the stub's indirect jump
 * is replaced by a direct jump to the hook, and the slot it used to
 * read is pointed at the hook as well (hooks do this so a later
 * re-resolution cannot undo them). The stub lives in the executable's
 * text, so its bytes stop matching the on-disk file while the mapping
 * permissions stay read-execute.
 *
 * Same build constraints as got_hook: no PIE, lazy binding, writable
 * relocation table. The stub address is recovered from the slot's
 * link-time value, which lazy binding points at the stub's own push
 * instruction (stub start + 6).
 */
#include "common.h"
#include "jumpslot.h"

#include <sys/mman.h>
#include <unistd.h>

static long hook_getpid(void)
{
    return 42;
}

static uint8_t *stub;
static uintptr_t *slot;

static int patch_stub(void)
{
    uint8_t *page = (uint8_t *)((uintptr_t)stub & ~0xFFFUL);
    int32_t rel = (int32_t)((uintptr_t)hook_getpid - ((uintptr_t)stub + 5));

    /* keep execute during the write: this page is the running text */
    if (mprotect(page, 4096, PROT_READ | PROT_WRITE | PROT_EXEC) != 0)
        return -1;
    stub[0] = 0xE9; /* jmp rel32 */
    memcpy(stub + 1, &rel, 4);
    if (mprotect(page, 4096, PROT_READ | PROT_EXEC) != 0)
        return -1;

    *slot = (uintptr_t)hook_getpid;
    return getpid() == 42 ? 0 : -1;
}

int main(void)
{
    slot = find_jump_slot("getpid");
    if (!slot)
        unsupported("no jump-slot relocation for getpid");

    /* before the first call the slot still holds its link-time value */
    stub = (uint8_t *)(*slot - 6);
    if (stub[0] != 0xFF || stub[1] != 0x25)
        unsupported("unrecognized procedure-linkage stub shape");

    getpid(); /* resolve first so the pre-infection slot is a libc address */

    serve(patch_stub);
    return 0;
}
