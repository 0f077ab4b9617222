#include <csignal>
#include <iostream>
#include <thread>

#include "reflex/cli.hpp"

int main(int argc, char** argv) {
  // SIGINT/SIGTERM end a served run cleanly instead of killing it.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  std::thread([set] {
    for (;;) {
      int sig = 0;
      sigwait(&set, &sig);
      std::cerr << "interrupted\n";
      reflex::interrupt_active_session();
      static int count = 0;
      if (++count > 1) std::_Exit(130);
    }
  }).detach();

  std::vector<std::string> args(argv + 1, argv + argc);
  return reflex::run_cli(args, std::cout, std::cerr);
}
