#include <csignal>

#include "equate/cli.hpp"

int main(int argc, char** argv) {
  std::signal(SIGINT, equate::cli::on_interrupt);
  std::signal(SIGTERM, equate::cli::on_interrupt);
  return equate::cli::main(argc, argv);
}
