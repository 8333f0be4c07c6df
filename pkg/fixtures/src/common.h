/* Line protocol shared by every fixture: the harness drives a fixture
 * over stdin/stdout with single-word commands and waits for state
 * announcements. Keeping it here means every fixture behaves the same
 * way under the test harness. */
#ifndef FIXTURE_COMMON_H
#define FIXTURE_COMMON_H

#include <stddef.h>

/* Write one line and flush so the harness never blocks on buffering. */
void say(const char *line);

/* Read the next whitespace-trimmed line from stdin into buf.
 * Returns 1 on a line, 0 on EOF. */
int read_command(char *buf, size_t size);

/* Announce an environment problem and exit with status 3. The harness
 * maps this to its unsupported-environment error. */
_Noreturn void unsupported(const char *reason);

/* Fatal runtime error: announce and exit with status 4. */
_Noreturn void die(const char *what);

/* Standard serve loop: announce READY, then handle commands.
 * on_trigger may be NULL for single-phase fixtures; the loop answers
 * ERR to trigger in that case. on_trigger returns 0 on success. */
void serve(int (*on_trigger)(void));

#endif
