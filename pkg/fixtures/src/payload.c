/* The injected library: deliberately boring. A real implant would do
 * work in its constructor; detection only needs the executable mapping
 * of a non-dependency object to appear. */

static volatile int poked;

__attribute__((constructor)) static void wake(void)
{
    poked = 1;
}

int payload_present(void)
{
    return poked;
}
