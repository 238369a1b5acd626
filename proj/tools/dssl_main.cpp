#include <malloc.h>

#include <iostream>
#include <string>
#include <vector>

#include "dssl/cli.hpp"

int main(int argc, char** argv) {
  // Training allocates and frees the same large buffers every batch; keep them
  // on the heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
  std::vector<std::string> args(argv + 1, argv + argc);
  return dssl::cli::run(args, std::cout, std::cerr);
}
