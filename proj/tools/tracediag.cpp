#include "tracediag/cli.hpp"

int main(int argc, char** argv) {
  try {
    return tracediag::cli::run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "tracediag: internal error: " << e.what() << '\n';
    return tracediag::cli::kInternal;
  }
}
