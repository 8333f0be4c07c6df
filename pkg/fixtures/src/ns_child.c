/* Parks a process inside fresh user and pid namespaces so namespace
 * enumeration has something real to walk. Created with unshare, which
 * unprivileged users may do; hosts that forbid it get the unsupported
 * announcement instead of a failure.
 *
 * The serving process is the child: pid 1 of the new pid namespace.
 */
#define _GNU_SOURCE /* unshare, CLONE_NEW* */
#include "common.h"

#include <sched.h>
#include <stdlib.h>
#include <sys/wait.h>
#include <unistd.h>

int main(void)
{
    pid_t child;

    if (unshare(CLONE_NEWUSER | CLONE_NEWPID) != 0)
        unsupported("kernel forbids unprivileged user+pid namespaces");

    /* only children enter the new pid namespace */
    child = fork();
    if (child < 0)
        die("fork");
    if (child == 0) {
        serve(NULL);
        _exit(0);
    }

    waitpid(child, NULL, 0);
    return 0;
}
