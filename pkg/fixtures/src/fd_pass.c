/* Hands a listening TCP socket from one process to an unrelated one
 * over a UNIX domain socket, the move that lets an implant take over a
 * service's accept loop. Run as two siblings:
 *
 *   fd_pass sender <name>     owns the TCP listener, gives it away on
 *                             trigger and closes its copy
 *   fd_pass receiver <name>   waits on the UNIX socket, announces
 *                             INFECTED once it holds the descriptor
 *
 * <name> is an abstract UNIX socket address, so nothing touches the
 * filesystem. The sender must be started first.
 */
#include "common.h"

#include <errno.h>
#include <netinet/in.h>
#include <stddef.h>
#include <string.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <time.h>
#include <unistd.h>

static int tcp_fd = -1;
static int peer_fd = -1;

static socklen_t abstract_addr(struct sockaddr_un *sa, const char *name)
{
    memset(sa, 0, sizeof *sa);
    sa->sun_family = AF_UNIX;
    sa->sun_path[0] = '\0';
    strncpy(sa->sun_path + 1, name, sizeof sa->sun_path - 2);
    return (socklen_t)(offsetof(struct sockaddr_un, sun_path) + 1 + strlen(name));
}

static int send_listener(void)
{
    struct msghdr msg = {0};
    struct iovec iov;
    char data = 'S';
    char ctrl[CMSG_SPACE(sizeof(int))];
    struct cmsghdr *cm;

    iov.iov_base = &data;
    iov.iov_len = 1;
    msg.msg_iov = &iov;
    msg.msg_iovlen = 1;
    msg.msg_control = ctrl;
    msg.msg_controllen = sizeof ctrl;
    cm = CMSG_FIRSTHDR(&msg);
    cm->cmsg_level = SOL_SOCKET;
    cm->cmsg_type = SCM_RIGHTS;
    cm->cmsg_len = CMSG_LEN(sizeof(int));
    memcpy(CMSG_DATA(cm), &tcp_fd, sizeof(int));

    if (sendmsg(peer_fd, &msg, 0) != 1)
        return -1;
    close(tcp_fd); /* the receiver is the only holder now */
    tcp_fd = -1;
    return 0;
}

static void run_sender(const char *name)
{
    struct sockaddr_un sa;
    struct sockaddr_in addr = {0};
    int ctl = socket(AF_UNIX, SOCK_STREAM, 0);
    socklen_t len = abstract_addr(&sa, name);

    if (ctl < 0 || bind(ctl, (struct sockaddr *)&sa, len) != 0 ||
        listen(ctl, 1) != 0)
        die("control socket");

    tcp_fd = socket(AF_INET, SOCK_STREAM, 0);
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (tcp_fd < 0 || bind(tcp_fd, (struct sockaddr *)&addr, sizeof addr) != 0 ||
        listen(tcp_fd, 1) != 0)
        die("tcp listener");

    peer_fd = accept(ctl, NULL, NULL);
    if (peer_fd < 0)
        die("accept receiver");
    close(ctl);

    serve(send_listener);
}

static void run_receiver(const char *name)
{
    struct sockaddr_un sa;
    socklen_t len = abstract_addr(&sa, name);
    struct msghdr msg = {0};
    struct iovec iov;
    char data;
    char ctrl[CMSG_SPACE(sizeof(int))];
    struct cmsghdr *cm;
    int got = -1;

    peer_fd = socket(AF_UNIX, SOCK_STREAM, 0);
    if (peer_fd < 0)
        die("control socket");

    /* the harness starts both roles together; outwait the sender's bind */
    for (int tries = 0;; tries++) {
        if (connect(peer_fd, (struct sockaddr *)&sa, len) == 0)
            break;
        if (errno != ECONNREFUSED || tries >= 200)
            die("connect sender");
        nanosleep(&(struct timespec){.tv_nsec = 5 * 1000 * 1000}, NULL);
    }

    say("READY");

    iov.iov_base = &data;
    iov.iov_len = 1;
    msg.msg_iov = &iov;
    msg.msg_iovlen = 1;
    msg.msg_control = ctrl;
    msg.msg_controllen = sizeof ctrl;
    if (recvmsg(peer_fd, &msg, 0) != 1)
        die("receive descriptor");
    for (cm = CMSG_FIRSTHDR(&msg); cm; cm = CMSG_NXTHDR(&msg, cm)) {
        if (cm->cmsg_level == SOL_SOCKET && cm->cmsg_type == SCM_RIGHTS)
            memcpy(&got, CMSG_DATA(cm), sizeof(int));
    }
    if (got < 0)
        die("no descriptor in message");

    say("INFECTED");

    /* hold the stolen listener until told to exit */
    for (;;) {
        char cmd[64];
        if (!read_command(cmd, sizeof cmd) || strcmp(cmd, "exit") == 0)
            break;
        say("ERR");
    }
    close(got);
}

int main(int argc, char **argv)
{
    if (argc != 3)
        die("usage: fd_pass sender|receiver <name>");
    if (strcmp(argv[1], "sender") == 0)
        run_sender(argv[2]);
    else if (strcmp(argv[1], "receiver") == 0)
        run_receiver(argv[2]);
    else
        die("unknown role");
    return 0;
}
