#include "tsflow/subprocess.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <mutex>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

namespace tsflow {

namespace {

void ignore_sigpipe_once() {
  // A child that exits without reading its stdin would otherwise kill us on write.
  static std::once_flag flag;
  std::call_once(flag, [] { std::signal(SIGPIPE, SIG_IGN); });
}

void close_fd(int& fd) {
  if (fd >= 0) {
    ::close(fd);
    fd = -1;
  }
}

void append_tail(std::string& tail, const char* data, std::size_t n, std::size_t cap) {
  tail.append(data, n);
  if (tail.size() > cap) tail.erase(0, tail.size() - cap);
}

}  // namespace

ProcessResult run_process(const std::vector<std::string>& argv, const std::string& stdin_text,
                          const ProcessOptions& options) {
  ProcessResult result;
  if (argv.empty()) {
    result.spawn_error = "empty command";
    return result;
  }
  ignore_sigpipe_once();

  int in_pipe[2], out_pipe[2], err_pipe[2], exec_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0 || ::pipe2(err_pipe, O_CLOEXEC) != 0 ||
      ::pipe2(exec_pipe, O_CLOEXEC) != 0) {
    result.spawn_error = std::string("pipe: ") + std::strerror(errno);
    return result;
  }

  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) {
    result.spawn_error = std::string("fork: ") + std::strerror(errno);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1], exec_pipe[0], exec_pipe[1]})
      ::close(fd);
    return result;
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    ::signal(SIGPIPE, SIG_DFL);
    ::execvp(args[0], args.data());
    const int code = errno;
    [[maybe_unused]] auto n = ::write(exec_pipe[1], &code, sizeof code);
    ::_exit(127);
  }
  ::setpgid(pid, pid);

  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  ::close(exec_pipe[1]);

  int exec_errno = 0;
  if (::read(exec_pipe[0], &exec_errno, sizeof exec_errno) == static_cast<ssize_t>(sizeof exec_errno)) {
    ::close(exec_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(err_pipe[0]);
    int status = 0;
    ::waitpid(pid, &status, 0);
    result.spawn_error = "cannot execute '" + argv[0] + "': " + std::strerror(exec_errno);
    return result;
  }
  ::close(exec_pipe[0]);

  int stdin_fd = in_pipe[1];
  int stdout_fd = out_pipe[0];
  int stderr_fd = err_pipe[0];
  ::fcntl(stdin_fd, F_SETFL, O_NONBLOCK);
  std::size_t written = 0;
  if (stdin_text.empty()) close_fd(stdin_fd);

  const auto deadline = std::chrono::steady_clock::now() + options.timeout;
  char buf[65536];
  while (stdout_fd >= 0 || stderr_fd >= 0) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      result.timed_out = true;
      ::kill(-pid, SIGKILL);
      break;
    }
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
    pollfd fds[3];
    int n = 0;
    int idx_in = -1, idx_out = -1, idx_err = -1;
    if (stdin_fd >= 0) {
      idx_in = n;
      fds[n++] = {stdin_fd, POLLOUT, 0};
    }
    if (stdout_fd >= 0) {
      idx_out = n;
      fds[n++] = {stdout_fd, POLLIN, 0};
    }
    if (stderr_fd >= 0) {
      idx_err = n;
      fds[n++] = {stderr_fd, POLLIN, 0};
    }
    const int rc = ::poll(fds, static_cast<nfds_t>(n), static_cast<int>(std::min<long long>(remaining, 1000)));
    if (rc < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (idx_in >= 0 && fds[idx_in].revents) {
      const ssize_t w = ::write(stdin_fd, stdin_text.data() + written, stdin_text.size() - written);
      if (w > 0) written += static_cast<std::size_t>(w);
      if (w < 0 && errno != EAGAIN) close_fd(stdin_fd);
      if (written == stdin_text.size()) close_fd(stdin_fd);
    }
    if (idx_out >= 0 && fds[idx_out].revents) {
      const ssize_t r = ::read(stdout_fd, buf, sizeof buf);
      if (r <= 0) {
        close_fd(stdout_fd);
      } else if (result.stdout_text.size() + static_cast<std::size_t>(r) <= options.stdout_limit_bytes) {
        result.stdout_text.append(buf, static_cast<std::size_t>(r));
      } else {
        result.stdout_truncated = true;
      }
    }
    if (idx_err >= 0 && fds[idx_err].revents) {
      const ssize_t r = ::read(stderr_fd, buf, sizeof buf);
      if (r <= 0) {
        close_fd(stderr_fd);
      } else {
        append_tail(result.stderr_tail, buf, static_cast<std::size_t>(r), options.stderr_tail_bytes);
      }
    }
  }
  close_fd(stdin_fd);
  close_fd(stdout_fd);
  close_fd(stderr_fd);

  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.exit_code = -WTERMSIG(status);
  }
  return result;
}

}  // namespace tsflow
