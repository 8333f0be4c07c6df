/* Runs entirely from memory and parks a thread in injected code:
 *
 *   1. copies its own image into a memory-backed file descriptor and
 *      re-executes from it, so /proc/<pid>/exe names no disk file and
 *      every image mapping is anonymous-backed;
 *   2. copies a tiny sleep loop into a fresh writable-executable
 *      buffer and starts a thread whose entry point is that buffer,
 *      the footprint thread-injection shellcode leaves behind.
 *
 * x86-64 only (the injected loop is raw machine code).
 */
#define _GNU_SOURCE /* memfd_create, fexecve */
#include "common.h"

#include <fcntl.h>
#include <pthread.h>
#include <stdlib.h>
#include <string.h>
#include <sys/mman.h>
#include <sys/sendfile.h>
#include <sys/stat.h>
#include <unistd.h>

#ifndef __x86_64__
int main(void)
{
    unsupported("injected code is x86-64 machine code");
}
#else

/* mov eax, SYS_pause; syscall; jmp back - sleeps forever without
 * burning cpu, with the thread's userspace context inside the buffer */
static const unsigned char park_loop[] = {
    0xB8, 0x22, 0x00, 0x00, 0x00, /* mov eax, 34 (pause) */
    0x0F, 0x05,                   /* syscall             */
    0xEB, 0xF7,                   /* jmp -9              */
};

static void reexec_from_memory(char **argv)
{
    int self = open("/proc/self/exe", O_RDONLY);
    int mem = memfd_create("fixture", MFD_CLOEXEC);
    struct stat st;
    char *envp[] = {(char *)"FIXTURE_STAGE=2", NULL};

    if (self < 0 || mem < 0 || fstat(self, &st) != 0)
        die("open own image");
    if (sendfile(mem, self, NULL, (size_t)st.st_size) != st.st_size)
        die("copy own image");
    close(self);
    fexecve(mem, argv, envp);
    die("re-exec from memory");
}

int main(int argc, char **argv)
{
    void *buf;
    pthread_t parked;

    (void)argc;
    if (!getenv("FIXTURE_STAGE"))
        reexec_from_memory(argv); /* does not return */

    buf = mmap(NULL, 4096, PROT_READ | PROT_WRITE | PROT_EXEC,
               MAP_PRIVATE | MAP_ANONYMOUS, -1, 0);
    if (buf == MAP_FAILED)
        unsupported("kernel refused a writable-executable mapping");
    memcpy(buf, park_loop, sizeof park_loop);

    if (pthread_create(&parked, NULL, (void *(*)(void *))buf, NULL) != 0)
        die("thread start");

    serve(NULL);
    return 0;
}

#endif
