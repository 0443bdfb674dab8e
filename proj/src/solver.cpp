#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cctype>
#include <chrono>
#include <cstring>
#include <thread>

#include "fv/chc.hpp"

namespace fv {

SolveResult run_solver(const std::vector<std::string>& argv,
                       const std::string& file, int timeout_secs) {
  SolveResult r;
  if (argv.empty()) {
    r.kind = SolveResult::Error;
    r.detail = "no solver command configured";
    return r;
  }
  int fds[2];
  if (pipe(fds) != 0) {
    r.detail = "pipe failed";
    return r;
  }
  pid_t pid = fork();
  if (pid < 0) {
    r.detail = "fork failed";
    return r;
  }
  if (pid == 0) {
    close(fds[0]);
    dup2(fds[1], 1);
    dup2(fds[1], 2);
    std::vector<char*> av;
    for (auto& a : argv) av.push_back(const_cast<char*>(a.c_str()));
    av.push_back(const_cast<char*>(file.c_str()));
    av.push_back(nullptr);
    execvp(av[0], av.data());
    _exit(127);
  }
  close(fds[1]);

  auto deadline = std::chrono::steady_clock::now() +
                  std::chrono::seconds(timeout_secs > 0 ? timeout_secs : 300);
  int status = 0;
  bool timed_out = false;
  for (;;) {
    pid_t w = waitpid(pid, &status, WNOHANG);
    if (w == pid) break;
    if (std::chrono::steady_clock::now() > deadline) {
      kill(pid, SIGKILL);
      waitpid(pid, &status, 0);
      timed_out = true;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  std::string out;
  char buf[4096];
  ssize_t n;
  while ((n = read(fds[0], buf, sizeof buf)) > 0) out.append(buf, n);
  close(fds[0]);

  if (timed_out) {
    r.kind = SolveResult::Timeout;
    r.detail = "solver timed out";
    return r;
  }
  // first whitespace-delimited token, case-insensitive
  size_t i = 0;
  while (i < out.size() && std::isspace((unsigned char)out[i])) ++i;
  size_t j = i;
  while (j < out.size() && !std::isspace((unsigned char)out[j])) ++j;
  std::string tok = out.substr(i, j - i);
  for (auto& c : tok) c = (char)std::tolower((unsigned char)c);
  r.detail = out;
  if (tok == "sat")
    r.kind = SolveResult::Sat;
  else if (tok == "unsat")
    r.kind = SolveResult::Unsat;
  else if (tok == "unknown" || tok == "timeout")
    r.kind = SolveResult::Unknown;
  else
    r.kind = SolveResult::Error;
  return r;
}

}  // namespace fv
