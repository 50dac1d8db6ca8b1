// Standalone generator for the synthetic digit dataset in MNIST IDX layout.

#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tmlkit/synthdigits.hpp"

int main(int argc, char** argv) {
  CLI::App app{"synthetic digit dataset generator (IDX format)"};
  std::string out = "data";
  int train_count = 4000, test_count = 1000;
  uint64_t seed = 7;
  app.add_option("--out", out, "output directory");
  app.add_option("--train", train_count, "training sample count")
      ->check(CLI::PositiveNumber);
  app.add_option("--test", test_count, "test sample count")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "generator seed");
  CLI11_PARSE(app, argc, argv);

  try {
    std::filesystem::create_directories(out);
    tml::generate_synth_digits(out, train_count, test_count, seed);
    std::cout << "wrote train (" << train_count << ") and t10k ("
              << test_count << ") splits under " << out << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
