#include "common.h"

#include <stdio.h>
#include <stdlib.h>
#include <string.h>

void say(const char *line)
{
    printf("%s\n", line);
    fflush(stdout);
}

int read_command(char *buf, size_t size)
{
    if (!fgets(buf, (int)size, stdin))
        return 0;
    buf[strcspn(buf, " \t\r\n")] = '\0';
    return 1;
}

_Noreturn void unsupported(const char *reason)
{
    printf("UNSUPPORTED %s\n", reason);
    fflush(stdout);
    exit(3);
}

_Noreturn void die(const char *what)
{
    printf("ERR %s\n", what);
    fflush(stdout);
    exit(4);
}

void serve(int (*on_trigger)(void))
{
    char cmd[64];

    say("READY");
    while (read_command(cmd, sizeof cmd)) {
        if (strcmp(cmd, "trigger") == 0) {
            if (on_trigger && on_trigger() == 0)
                say("INFECTED");
            else
                say("ERR");
        } else if (strcmp(cmd, "exit") == 0) {
            break;
        } else if (cmd[0] != '\0') {
            say("ERR");
        }
    }
}
