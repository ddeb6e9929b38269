#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "mscan/utils.hpp"

int main(int argc, char** argv) {
  mscan::set_threads(2);
  doctest::Context context;
  context.applyCommandLine(argc, argv);
  return context.run();
}
